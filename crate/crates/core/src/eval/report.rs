use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{bound_class, BoundClass};
use crate::data::{Split, ToyFixture};
use crate::error::Result;
use crate::estimators::{Method, SolverConfig, SolverDiagnostics};
use crate::graph::ItemGraph;

/// One scored prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRow {
    pub user: usize,
    pub item: usize,
    pub truth: f64,
    pub class: BoundClass,
    pub method: Method,
    pub estimate: f64,
    /// Filled from the user mean or global mean after the method abstained.
    pub is_fallback: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClassCounts {
    pub higher: usize,
    pub lower: usize,
    pub neither: usize,
    pub unclassifiable: usize,
}

impl ClassCounts {
    fn bump(&mut self, class: BoundClass) {
        *self.slot(class) += 1;
    }

    fn slot(&mut self, class: BoundClass) -> &mut usize {
        match class {
            BoundClass::Higher => &mut self.higher,
            BoundClass::Lower => &mut self.lower,
            BoundClass::Neither => &mut self.neither,
            BoundClass::Unclassifiable => &mut self.unclassifiable,
        }
    }

    pub fn get(&self, class: BoundClass) -> usize {
        match class {
            BoundClass::Higher => self.higher,
            BoundClass::Lower => self.lower,
            BoundClass::Neither => self.neither,
            BoundClass::Unclassifiable => self.unclassifiable,
        }
    }

    pub fn total(&self) -> usize {
        self.higher + self.lower + self.neither + self.unclassifiable
    }
}

/// Share of the kNN squared residual carried by one bound class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorContribution {
    pub class: BoundClass,
    pub examples: usize,
    pub squared_residual: f64,
    /// `squared_residual` over the total across all test examples.
    pub share: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DiagnosticsSummary {
    pub users_solved: usize,
    pub solver_failures: usize,
    pub nonconverged_users: usize,
    pub mean_iterations: f64,
    pub max_iterations: usize,
    pub mean_source_count: f64,
    pub mean_final_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: Method,
    /// RMSE over the union of higher and lower examples.
    pub rmse_all: Option<f64>,
    pub rmse_higher: Option<f64>,
    pub rmse_lower: Option<f64>,
    /// RMSE over every test example the method scored (kNN scores all).
    pub rmse_scored: Option<f64>,
    pub predictions: usize,
    pub fallbacks: usize,
    pub diagnostics: DiagnosticsSummary,
}

/// RMSE of one method on the test examples sharing a bound class and a true rating.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthGroup {
    pub method: Method,
    pub class: BoundClass,
    pub truth: f64,
    pub count: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub test_examples: usize,
    pub unknown_items: usize,
    pub class_counts: ClassCounts,
    pub higher_fraction: f64,
    pub lower_fraction: f64,
    pub bound_fraction: f64,
    pub methods: Vec<MethodReport>,
    pub knn_error_contribution: Vec<ErrorContribution>,
    pub by_truth: Vec<TruthGroup>,
}

impl EvaluationReport {
    pub fn method(&self, method: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Flat TSV of per-class RMSE: `method class count rmse`.
    pub fn write_rmse_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "method\tclass\tcount\trmse")?;
        for m in &self.methods {
            let rows = [
                ("all", self.class_counts.higher + self.class_counts.lower, m.rmse_all),
                ("higher", self.class_counts.higher, m.rmse_higher),
                ("lower", self.class_counts.lower, m.rmse_lower),
            ];
            for (class, count, rmse) in rows {
                let rmse = rmse.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
                writeln!(out, "{}\t{class}\t{count}\t{rmse}", m.method)?;
            }
        }
        Ok(())
    }

    /// Per-truth-value breakdown: `method class truth count rmse`.
    pub fn write_truth_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "method\tclass\ttruth\tcount\trmse")?;
        for g in &self.by_truth {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.6}",
                g.method,
                g.class.as_str(),
                g.truth,
                g.count,
                g.rmse
            )?;
        }
        Ok(())
    }

    /// The RMSE table with rows All/Higher/Lower and one column per method.
    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{:<8}", "RMSE"));
        for m in &self.methods {
            s.push_str(&format!("{:>10}", m.method.as_str()));
        }
        s.push('\n');
        for (label, pick) in [
            (
                "All",
                (|m: &MethodReport| m.rmse_all) as fn(&MethodReport) -> Option<f64>,
            ),
            ("Higher", |m: &MethodReport| m.rmse_higher),
            ("Lower", |m: &MethodReport| m.rmse_lower),
        ] {
            s.push_str(&format!("{label:<8}"));
            for m in &self.methods {
                match pick(m) {
                    Some(v) => s.push_str(&format!("{v:>10.3}")),
                    None => s.push_str(&format!("{:>10}", "-")),
                }
            }
            s.push('\n');
        }
        s
    }
}

fn rmse(residuals: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for r in residuals {
        sum += r * r;
        n += 1;
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

struct UserOutcome {
    rows: Vec<PredictionRow>,
    diagnostics: Vec<(Method, Option<SolverDiagnostics>)>,
}

/// Runs every method for every user and scores the predictions.
///
/// kNN predicts every test example (its residuals feed the error
/// contribution); the other methods predict the higher/lower examples only.
/// Abstentions and failed solves fall back to the user's training mean, then
/// the global training mean. Users are processed in parallel on the current
/// rayon pool and aggregated in user order, so the report does not depend on
/// the number of threads.
pub fn evaluate(
    methods: &[Method],
    split: &Split,
    graph: &ItemGraph,
    config: &SolverConfig,
) -> Result<EvaluationReport> {
    evaluate_detailed(methods, split, graph, config).map(|(report, _)| report)
}

/// Like [`evaluate`], also returning every prediction row in user order.
pub fn evaluate_detailed(
    methods: &[Method],
    split: &Split,
    graph: &ItemGraph,
    config: &SolverConfig,
) -> Result<(EvaluationReport, Vec<PredictionRow>)> {
    config.validate()?;
    let train = &split.train;
    let global_mean = train
        .global_mean()
        .unwrap_or(0.5 * (config.bounds.low + config.bounds.high));

    let mut per_user: Vec<Vec<(usize, f64, BoundClass)>> = vec![Vec::new(); train.user_count()];
    let mut unknown_items = 0;
    for (u, i, r) in split.test_indexed() {
        match bound_class(u, i, r, train, graph) {
            Ok(class) => per_user[u].push((i, r, class)),
            Err(_) => unknown_items += 1,
        }
    }

    let outcomes: Vec<UserOutcome> = per_user
        .par_iter()
        .enumerate()
        .map(|(u, tests)| {
            let mut outcome = UserOutcome {
                rows: Vec::new(),
                diagnostics: Vec::new(),
            };
            if tests.is_empty() {
                return outcome;
            }
            let observed: BTreeMap<usize, f64> = train.user_ratings(u).iter().copied().collect();
            let fallback = train.user_mean(u).unwrap_or(global_mean);
            let all_targets: BTreeSet<usize> = tests.iter().map(|t| t.0).collect();
            let bound_targets: BTreeSet<usize> = tests.iter().filter(|t| t.2.is_bound()).map(|t| t.0).collect();

            let mut run = |method: Method, targets: &BTreeSet<usize>, scored: &dyn Fn(BoundClass) -> bool| {
                if targets.is_empty() {
                    return;
                }
                let result = method.predict(graph, &observed, targets, config);
                let recovery = result.as_ref().ok();
                for &(item, truth, class) in tests.iter().filter(|t| scored(t.2)) {
                    let estimate = recovery.and_then(|r| r.estimate(item));
                    outcome.rows.push(PredictionRow {
                        user: u,
                        item,
                        truth,
                        class,
                        method,
                        estimate: estimate.unwrap_or(fallback),
                        is_fallback: estimate.is_none(),
                    });
                }
                outcome
                    .diagnostics
                    .push((method, recovery.map(|r| r.diagnostics.clone())));
            };

            run(Method::Knn, &all_targets, &|_| true);
            for &m in methods {
                if m != Method::Knn {
                    run(m, &bound_targets, &|c: BoundClass| c.is_bound());
                }
            }
            outcome
        })
        .collect();

    let mut rows = Vec::new();
    let mut diagnostics: BTreeMap<Method, Vec<Option<SolverDiagnostics>>> = BTreeMap::new();
    for outcome in outcomes {
        rows.extend(outcome.rows);
        for (m, d) in outcome.diagnostics {
            diagnostics.entry(m).or_default().push(d);
        }
    }
    let mut report = summarize(methods, &rows, &diagnostics);
    report.unknown_items = unknown_items;
    Ok((report, rows))
}

/// Aggregates scored predictions into a report, in row order.
///
/// Class counts come from the kNN rows, which cover every test example.
pub fn summarize(
    methods: &[Method],
    rows: &[PredictionRow],
    diagnostics: &BTreeMap<Method, Vec<Option<SolverDiagnostics>>>,
) -> EvaluationReport {
    let mut counts = ClassCounts::default();
    let mut contribution: BTreeMap<BoundClass, f64> = BTreeMap::new();
    let mut total_sq = 0.0;
    for row in rows.iter().filter(|r| r.method == Method::Knn) {
        counts.bump(row.class);
        let sq = (row.estimate - row.truth).powi(2);
        *contribution.entry(row.class).or_insert(0.0) += sq;
        total_sq += sq;
    }
    let n = counts.total();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };

    let knn_error_contribution = BoundClass::ALL
        .iter()
        .map(|&class| {
            let sq = contribution.get(&class).copied().unwrap_or(0.0);
            ErrorContribution {
                class,
                examples: counts.get(class),
                squared_residual: sq,
                share: if total_sq > 0.0 { sq / total_sq } else { 0.0 },
            }
        })
        .collect();

    let mut method_reports = Vec::new();
    let mut groups: BTreeMap<(Method, BoundClass, i64), (f64, usize, f64)> = BTreeMap::new();
    for &method in methods {
        let mine: Vec<&PredictionRow> = rows.iter().filter(|r| r.method == method).collect();
        let residuals =
            |pred: &dyn Fn(&PredictionRow) -> bool| rmse(mine.iter().filter(|r| pred(r)).map(|r| r.estimate - r.truth));
        for r in mine.iter().filter(|r| r.class.is_bound()) {
            let key = (method, r.class, (r.truth * 1e6).round() as i64);
            let entry = groups.entry(key).or_insert((r.truth, 0, 0.0));
            entry.1 += 1;
            entry.2 += (r.estimate - r.truth).powi(2);
        }
        let diag = summarize_diagnostics(diagnostics.get(&method).map(Vec::as_slice).unwrap_or(&[]));
        method_reports.push(MethodReport {
            method,
            rmse_all: residuals(&|r| r.class.is_bound()),
            rmse_higher: residuals(&|r| r.class == BoundClass::Higher),
            rmse_lower: residuals(&|r| r.class == BoundClass::Lower),
            rmse_scored: residuals(&|_| true),
            predictions: mine.len(),
            fallbacks: mine.iter().filter(|r| r.is_fallback).count(),
            diagnostics: diag,
        });
    }
    let by_truth = groups
        .into_iter()
        .map(|((method, class, _), (truth, count, sq))| TruthGroup {
            method,
            class,
            truth,
            count,
            rmse: (sq / count as f64).sqrt(),
        })
        .collect();

    EvaluationReport {
        test_examples: n,
        unknown_items: 0,
        higher_fraction: frac(counts.higher),
        lower_fraction: frac(counts.lower),
        bound_fraction: frac(counts.higher + counts.lower),
        class_counts: counts,
        methods: method_reports,
        knn_error_contribution,
        by_truth,
    }
}

fn summarize_diagnostics(runs: &[Option<SolverDiagnostics>]) -> DiagnosticsSummary {
    let solved: Vec<&SolverDiagnostics> = runs.iter().flatten().collect();
    let k = solved.len();
    let mean = |f: &dyn Fn(&SolverDiagnostics) -> f64| {
        if k == 0 {
            0.0
        } else {
            solved.iter().map(|d| f(d)).sum::<f64>() / k as f64
        }
    };
    DiagnosticsSummary {
        users_solved: k,
        solver_failures: runs.len() - k,
        nonconverged_users: solved.iter().filter(|d| !d.converged).count(),
        mean_iterations: mean(&|d| d.iterations_used as f64),
        max_iterations: solved.iter().map(|d| d.iterations_used).max().unwrap_or(0),
        mean_source_count: mean(&|d| d.source_count as f64),
        mean_final_objective: mean(&|d| d.final_objective),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyMethodReport {
    pub method: Method,
    /// RMSE over every unobserved item with a known true rating.
    pub rmse_unobserved: f64,
    pub abstentions: usize,
    pub estimates: Vec<Option<f64>>,
    pub diagnostics: SolverDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyReport {
    pub fixture: String,
    pub methods: Vec<ToyMethodReport>,
}

/// Scores methods on a toy fixture against its ground truth. Abstentions
/// are filled with the mean observed rating. The fixture's rating scale
/// replaces `config.bounds`.
pub fn evaluate_toy(toy: &ToyFixture, methods: &[Method], config: &SolverConfig) -> Result<ToyReport> {
    let config = &SolverConfig {
        bounds: toy.bounds,
        ..config.clone()
    };
    let n = toy.graph.len();
    let targets: BTreeSet<usize> = (0..n).collect();
    let fallback = toy.observed.values().sum::<f64>() / toy.observed.len().max(1) as f64;
    let mut out = Vec::new();
    for &method in methods {
        let rec = method.predict(&toy.graph, &toy.observed, &targets, config)?;
        let estimates = rec.rating_vector(n);
        let rmse_unobserved = match &toy.ground_truth {
            Some(truth) => rmse(
                (0..n)
                    .filter(|i| !toy.observed.contains_key(i))
                    .map(|i| estimates[i].unwrap_or(fallback) - truth[i]),
            )
            .unwrap_or(0.0),
            None => f64::NAN,
        };
        out.push(ToyMethodReport {
            method,
            rmse_unobserved,
            abstentions: rec.abstentions.len(),
            estimates,
            diagnostics: rec.diagnostics,
        });
    }
    Ok(ToyReport {
        fixture: toy.name.to_string(),
        methods: out,
    })
}
