use std::collections::{BTreeMap, BTreeSet};

use super::{check_observed, Method, UserRecovery};
use crate::data::Bounds;
use crate::error::Result;
use crate::graph::ItemGraph;

/// Item-based neighborhood estimate: the similarity-weighted average of the
/// user's ratings on the target's observed neighbors.
pub fn predict_knn(
    graph: &ItemGraph,
    observed: &BTreeMap<usize, f64>,
    targets: &BTreeSet<usize>,
    bounds: Bounds,
) -> Result<UserRecovery> {
    check_observed(graph, observed, bounds)?;
    let mut out = UserRecovery::new(Method::Knn, observed);
    for &t in targets {
        if observed.contains_key(&t) {
            continue;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &(j, w) in graph.neighbors(t) {
            if let Some(&r) = observed.get(&j) {
                num += w * r;
                den += w;
            }
        }
        if den > 0.0 {
            out.estimates.insert(t, bounds.clamp(num / den));
        } else {
            out.abstentions.insert(t);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ladder_toy_26, square_toy};

    #[test]
    fn square_fixture() {
        let toy = square_toy();
        let rec = predict_knn(&toy.graph, &toy.observed, &(0..4).collect(), toy.bounds).unwrap();
        assert_eq!(rec.estimate(1), Some(5.0));
        assert_eq!(rec.estimate(3), Some(3.0));
        assert_eq!(rec.estimate(0), Some(5.0));
        assert!(rec.abstentions.is_empty());
    }

    #[test]
    fn ladder_fixture() {
        let toy = ladder_toy_26();
        let rec = predict_knn(&toy.graph, &toy.observed, &(0..26).collect(), toy.bounds).unwrap();
        // v2 sees only v6 = 4
        assert_eq!(rec.estimate(1), Some(4.0));
        // v1 and v26 have no observed neighbors
        assert!(rec.abstentions.contains(&0));
        assert!(rec.abstentions.contains(&25));
        assert_eq!(rec.estimate(25), None);
    }

    #[test]
    fn weighted_average() {
        let labels = ["t", "a", "b"].map(String::from).to_vec();
        let g = ItemGraph::from_edges(labels, &[(0, 1, 0.9), (0, 2, 0.3)]).unwrap();
        let observed = BTreeMap::from([(1, 5.0), (2, 1.0)]);
        let rec = predict_knn(&g, &observed, &BTreeSet::from([0]), Bounds { low: 1.0, high: 5.0 }).unwrap();
        let expect = (0.9 * 5.0 + 0.3 * 1.0) / 1.2;
        assert!((rec.estimate(0).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_bounds_observation() {
        let toy = square_toy();
        let observed = BTreeMap::from([(0, 10.0)]);
        assert!(predict_knn(&toy.graph, &observed, &BTreeSet::new(), toy.bounds).is_err());
    }
}
