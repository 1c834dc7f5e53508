//! Top-interaction networks and their JSON / Graphviz exports.
//!
//! A directed edge `A -> B` carries `J[A][B]`: the row stock is the source.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::infer::{CouplingModel, CouplingParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ranking {
    /// Largest signed couplings.
    #[default]
    Signed,
    /// Largest couplings in magnitude.
    Absolute,
}

impl std::str::FromStr for Ranking {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(Ranking::Signed),
            "absolute" | "abs" => Ok(Ranking::Absolute),
            other => Err(Error::validation(format!("unknown ranking {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    #[serde(serialize_with = "full_precision")]
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeList {
    pub directed: bool,
    /// Stocks touched by at least one edge, sorted by ticker.
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    /// Set when fewer than the requested number of edges were available.
    #[serde(default)]
    pub truncated: bool,
    /// Inference parameters of the source model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<CouplingParams>,
}

/// 17 significant digits: every f64 survives a text round trip.
fn full_precision<S: Serializer>(w: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if !w.is_finite() {
        return s.serialize_none();
    }
    let raw = serde_json::value::RawValue::from_string(format!("{w:.16e}")).map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

/// The `k` largest off-diagonal couplings. Undirected models contribute each
/// unordered pair once, weighted by the mean of `J_ij` and `J_ji`. Ties are
/// broken by ticker pair so the result does not depend on stock order.
pub fn top_edges(model: &CouplingModel, k: usize, ranking: Ranking) -> Result<EdgeList> {
    if k == 0 {
        return Err(Error::validation("number of edges must be at least 1"));
    }
    let n = model.n();
    if model.stocks.len() != n {
        return Err(Error::validation("coupling model has mismatched ticker list"));
    }
    let name = |i: usize| model.stocks[i].clone();
    let mut candidates = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if model.directed {
                candidates.push(Edge {
                    source: name(i),
                    target: name(j),
                    weight: model.j[(i, j)],
                });
            } else if i < j {
                let (a, b) = if model.stocks[i] <= model.stocks[j] { (i, j) } else { (j, i) };
                candidates.push(Edge {
                    source: name(a),
                    target: name(b),
                    weight: 0.5 * (model.j[(i, j)] + model.j[(j, i)]),
                });
            }
        }
    }
    let key = |e: &Edge| match ranking {
        Ranking::Signed => e.weight,
        Ranking::Absolute => e.weight.abs(),
    };
    candidates.sort_by(|x, y| {
        key(y)
            .partial_cmp(&key(x))
            .unwrap_or(Ordering::Equal)
            .then_with(|| (&x.source, &x.target).cmp(&(&y.source, &y.target)))
    });
    let truncated = k > candidates.len();
    candidates.truncate(k);

    let mut nodes: Vec<String> = candidates
        .iter()
        .flat_map(|e| [e.source.clone(), e.target.clone()])
        .collect();
    nodes.sort();
    nodes.dedup();
    Ok(EdgeList {
        directed: model.directed,
        nodes,
        edges: candidates,
        truncated,
        parameters: Some(model.params),
    })
}

pub fn to_edge_list_json(el: &EdgeList) -> Result<String> {
    Ok(serde_json::to_string_pretty(el)?)
}

pub fn from_edge_list_json(text: &str) -> Result<EdgeList> {
    Ok(serde_json::from_str(text)?)
}

fn dot_id(name: &str) -> String {
    let plain = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if plain {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

/// Graphviz text: `digraph` for directed lists, `graph` otherwise. Pen widths
/// scale `|weight|` linearly onto `[1, 8]`.
pub fn to_dot(el: &EdgeList) -> String {
    let (kind, arrow) = if el.directed { ("digraph", "->") } else { ("graph", "--") };
    let mags = el.edges.iter().map(|e| e.weight.abs());
    let lo = mags.clone().fold(f64::INFINITY, f64::min);
    let hi = mags.fold(f64::NEG_INFINITY, f64::max);
    let pen = |w: f64| {
        if hi > lo {
            1.0 + 7.0 * (w.abs() - lo) / (hi - lo)
        } else {
            8.0
        }
    };

    let mut out = String::new();
    let _ = writeln!(out, "{kind} couplings {{");
    for node in &el.nodes {
        let _ = writeln!(out, "  {};", dot_id(node));
    }
    for e in &el.edges {
        let _ = writeln!(
            out,
            "  {} {arrow} {} [coupling={:e}, penwidth={:.3}];",
            dot_id(&e.source),
            dot_id(&e.target),
            e.weight,
            pen(e.weight)
        );
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::{CouplingParams, Method};
    use nalgebra::{dmatrix, DMatrix, DVector};
    use proptest::prelude::*;

    fn model(j: DMatrix<f64>, names: &[&str], directed: bool) -> CouplingModel {
        let n = j.nrows();
        CouplingModel {
            method: if directed { Method::Synchronous } else { Method::Equilibrium },
            j,
            h: DVector::zeros(n),
            directed,
            params: CouplingParams::default(),
            stocks: names.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn directed_max_selection() {
        let m = model(dmatrix![0.0, 3.0; 1.0, 0.0], &["stock1", "stock2"], true);
        let el = top_edges(&m, 1, Ranking::Signed).unwrap();
        assert_eq!(
            el.edges,
            vec![Edge {
                source: "stock1".into(),
                target: "stock2".into(),
                weight: 3.0
            }]
        );
        assert!(el.directed);
        assert!(top_edges(&m, 0, Ranking::Signed).is_err());
        let all = top_edges(&m, 5, Ranking::Signed).unwrap();
        assert!(all.truncated);
        assert_eq!(all.edges.len(), 2);
    }

    #[test]
    fn undirected_max_selection() {
        let m = model(dmatrix![0.0, 0.5, 0.2; 0.5, 0.0, 0.0; 0.2, 0.0, 0.0], &["A", "B", "C"], false);
        let el = top_edges(&m, 1, Ranking::Signed).unwrap();
        assert_eq!(el.edges.len(), 1);
        assert_eq!((el.edges[0].source.as_str(), el.edges[0].target.as_str(), el.edges[0].weight), ("A", "B", 0.5));
        assert_eq!(el.nodes, vec!["A".to_string(), "B".to_string()]);
    }

    #[test]
    fn absolute_ranking_picks_negative() {
        let m = model(dmatrix![0.0, 0.5; -0.9, 0.0], &["A", "B"], true);
        assert_eq!(top_edges(&m, 1, Ranking::Signed).unwrap().edges[0].weight, 0.5);
        assert_eq!(top_edges(&m, 1, Ranking::Absolute).unwrap().edges[0].weight, -0.9);
    }

    #[test]
    fn dot_output() {
        let m = model(dmatrix![0.0, 2.0, 0.5; 1.0, 0.0, 0.0; 0.0, 0.0, 0.0], &["A", "B", "BRK.B"], true);
        let el = top_edges(&m, 1, Ranking::Signed).unwrap();
        let dot = to_dot(&el);
        assert!(dot.starts_with("digraph"));
        assert_eq!(dot.matches("A -> B").count(), 1);

        let el = top_edges(&m, 3, Ranking::Signed).unwrap();
        let dot = to_dot(&el);
        assert!(dot.contains("A -> B [coupling=2e0, penwidth=8.000]"));
        assert!(dot.contains("A -> \"BRK.B\" [coupling=5e-1, penwidth=1.000]"));

        let u = model(dmatrix![0.0, 1.0; 1.0, 0.0], &["A", "B"], false);
        let dot = to_dot(&top_edges(&u, 1, Ranking::Signed).unwrap());
        assert!(dot.starts_with("graph"));
        assert_eq!(dot.matches("A -- B").count(), 1);
    }

    #[test]
    fn json_format() {
        let empty = EdgeList {
            directed: false,
            nodes: vec![],
            edges: vec![],
            truncated: false,
            parameters: None,
        };
        let text = to_edge_list_json(&empty).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["edges"], serde_json::json!([]));

        let one = EdgeList {
            directed: true,
            nodes: vec!["A".into(), "B".into()],
            edges: vec![Edge {
                source: "A".into(),
                target: "B".into(),
                weight: 0.1,
            }],
            truncated: false,
            parameters: None,
        };
        let text = to_edge_list_json(&one).unwrap();
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
    }

    fn arb_edges() -> impl Strategy<Value = EdgeList> {
        let params = prop::option::of((1usize..1000, 0.0f64..5.0, prop::option::of(1usize..500), 0.0f64..1.0)).prop_map(
            |p| {
                p.map(|(dt, chi, tau, lambda)| CouplingParams {
                    dt: Some(dt),
                    chi: Some(chi),
                    tau,
                    lambda,
                })
            },
        );
        (any::<bool>(), prop::collection::vec(("[A-Z]{1,4}", "[A-Z]{1,4}", -1e6f64..1e6), 0..20), params).prop_map(
            |(directed, raw, parameters)| {
                let edges: Vec<Edge> = raw
                    .into_iter()
                    .map(|(source, target, weight)| Edge { source, target, weight })
                    .collect();
                let mut nodes: Vec<String> = edges.iter().flat_map(|e| [e.source.clone(), e.target.clone()]).collect();
                nodes.sort();
                nodes.dedup();
                EdgeList {
                    directed,
                    nodes,
                    edges,
                    truncated: false,
                    parameters,
                }
            },
        )
    }

    proptest! {
        #[test]
        fn json_round_trip(el in arb_edges()) {
            let back = from_edge_list_json(&to_edge_list_json(&el).unwrap()).unwrap();
            prop_assert_eq!(back, el);
        }

        #[test]
        fn symmetric_all_pairs_once_and_order_free(vals in prop::collection::vec(-1.0f64..1.0, 10), perm_seed in 0usize..24) {
            // 5 stocks, symmetric
            let names = ["E", "B", "D", "A", "C"];
            let mut j = DMatrix::zeros(5, 5);
            let mut it = vals.iter();
            for a in 0..5 {
                for b in a + 1..5 {
                    let v = *it.next().unwrap();
                    j[(a, b)] = v;
                    j[(b, a)] = v;
                }
            }
            let el = top_edges(&model(j.clone(), &names, false), 10, Ranking::Signed).unwrap();
            prop_assert_eq!(el.edges.len(), 10);
            prop_assert!(!el.truncated);
            prop_assert!(el.edges.windows(2).all(|w| w[0].weight >= w[1].weight));
            let mut pairs: Vec<(String, String)> = el.edges.iter().map(|e| (e.source.clone(), e.target.clone())).collect();
            pairs.sort();
            pairs.dedup();
            prop_assert_eq!(pairs.len(), 10);

            // permute stock order: same output
            let mut order: Vec<usize> = (0..5).collect();
            order.rotate_left(perm_seed % 5);
            if perm_seed >= 12 { order.swap(0, 1); }
            let pj = DMatrix::from_fn(5, 5, |a, b| j[(order[a], order[b])]);
            let pnames: Vec<&str> = order.iter().map(|&i| names[i]).collect();
            let el2 = top_edges(&model(pj, &pnames, false), 10, Ranking::Signed).unwrap();
            prop_assert_eq!(el2, el);
        }
    }
}
