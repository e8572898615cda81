//! Evaluation protocol for the rating-bound problem.

mod linearity;
mod report;

use serde::{Deserialize, Serialize};

use crate::data::{RatingMatrix, RatingRecord};
use crate::error::{Error, Result};
use crate::graph::ItemGraph;

pub use linearity::{examine_linearity, HistogramBin, LinearityHistogram, BIN_WIDTH, HISTOGRAM_HALF_RANGE};
pub use report::{
    evaluate, evaluate_detailed, evaluate_toy, summarize, ClassCounts, DiagnosticsSummary, ErrorContribution,
    EvaluationReport, MethodReport, PredictionRow, ToyMethodReport, ToyReport, TruthGroup,
};

/// Where a test rating sits relative to the same user's training ratings on
/// the item's graph neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundClass {
    /// Strictly above every observed neighbor rating.
    Higher,
    /// Strictly below every observed neighbor rating.
    Lower,
    Neither,
    /// No neighbor rated by the user in training.
    Unclassifiable,
}

impl BoundClass {
    pub const ALL: [BoundClass; 4] = [
        BoundClass::Higher,
        BoundClass::Lower,
        BoundClass::Neither,
        BoundClass::Unclassifiable,
    ];

    pub fn is_bound(&self) -> bool {
        matches!(self, BoundClass::Higher | BoundClass::Lower)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BoundClass::Higher => "higher",
            BoundClass::Lower => "lower",
            BoundClass::Neither => "neither",
            BoundClass::Unclassifiable => "unclassifiable",
        }
    }
}

/// Classifies a test rating given by index.
pub fn bound_class(
    user: usize,
    item: usize,
    rating: f64,
    train: &RatingMatrix,
    graph: &ItemGraph,
) -> Result<BoundClass> {
    if item >= graph.len() {
        return Err(Error::InvalidArgument(format!("item {item} is not in the graph")));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(j, _) in graph.neighbors(item) {
        if let Some(r) = train.get(user, j) {
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    Ok(if lo > hi {
        BoundClass::Unclassifiable
    } else if rating > hi {
        BoundClass::Higher
    } else if rating < lo {
        BoundClass::Lower
    } else {
        BoundClass::Neither
    })
}

/// Classifies a test record by its identifiers. Unknown users are treated
/// as having no training ratings; unknown items are an error.
pub fn classify_bound(record: &RatingRecord, train: &RatingMatrix, graph: &ItemGraph) -> Result<BoundClass> {
    let item = graph
        .index_of(&record.item)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown item {:?}", record.item)))?;
    match train.users().get(&record.user) {
        Some(user) => bound_class(user, item, record.rating, train, graph),
        None => Ok(BoundClass::Unclassifiable),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_ratings, Bounds, Format};

    fn setup() -> (RatingMatrix, ItemGraph) {
        let src = "user,item,rating\nu,a,3\nu,b,4\nv,a,2\n";
        let m = parse_ratings(src.as_bytes(), Format::Csv, Bounds::new(1.0, 5.0).unwrap()).unwrap();
        // items: a=0, b=1, plus target t=2 linked to both
        let mut labels = m.items().ids().to_vec();
        labels.push("t".into());
        let g = ItemGraph::from_edges(labels, &[(2, 0, 0.8), (2, 1, 0.6)]).unwrap();
        (m, g)
    }

    fn record(user: &str, rating: f64) -> RatingRecord {
        RatingRecord {
            user: user.into(),
            item: "t".into(),
            rating,
            timestamp: None,
        }
    }

    #[test]
    fn strict_classes() {
        let (m, g) = setup();
        assert_eq!(classify_bound(&record("u", 5.0), &m, &g).unwrap(), BoundClass::Higher);
        assert_eq!(classify_bound(&record("u", 3.0), &m, &g).unwrap(), BoundClass::Neither);
        assert_eq!(classify_bound(&record("u", 4.0), &m, &g).unwrap(), BoundClass::Neither);
        assert_eq!(classify_bound(&record("u", 2.0), &m, &g).unwrap(), BoundClass::Lower);
        assert_eq!(classify_bound(&record("v", 2.0), &m, &g).unwrap(), BoundClass::Neither);
        assert_eq!(
            classify_bound(&record("w", 2.0), &m, &g).unwrap(),
            BoundClass::Unclassifiable
        );
    }

    #[test]
    fn unknown_item_is_error() {
        let (m, g) = setup();
        let mut r = record("u", 3.0);
        r.item = "zzz".into();
        assert!(classify_bound(&r, &m, &g).is_err());
    }
}
