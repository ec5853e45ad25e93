use approx::assert_abs_diff_eq;
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::Rng;
use std::collections::BTreeSet;

use super::*;
use crate::linalg;
use crate::rng::substream;

fn set(elems: &[&str]) -> BTreeSet<String> {
    elems.iter().map(|s| s.to_string()).collect()
}

fn communities(spec: &[(&str, &[&str])]) -> Vec<(String, BTreeSet<String>)> {
    spec.iter().map(|(n, e)| (n.to_string(), set(e))).collect()
}

fn random_graph(n: usize, seed: u64) -> CommunityGraph {
    let mut rng = substream(seed, &[0]);
    let mut g = Array2::zeros((n, n));
    for i in 0..n {
        g[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let w: f64 = rng.random_range(0.0..1.0);
            g[[i, j]] = w;
            g[[j, i]] = w;
        }
    }
    let nodes = (0..n).map(|i| format!("n{i}")).collect();
    CommunityGraph::from_matrix(nodes, g, None).unwrap()
}

#[test]
fn overlap_coefficient_fixtures() {
    let graph = overlap_matrix(&communities(&[
        ("full", &["a", "b", "c"]),
        ("same", &["a", "b", "c"]),
        ("partial", &["b", "c", "d"]),
        ("disjoint", &["x", "y"]),
    ]))
    .unwrap();
    let g = graph.matrix();
    assert_abs_diff_eq!(g[[0, 1]], 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(g[[0, 2]], 2.0 / 3.0, epsilon = 1e-15);
    assert_abs_diff_eq!(g[[0, 3]], 0.0, epsilon = 1e-15);
    assert_eq!(graph.sizes().unwrap(), &[3, 3, 3, 2]);
}

#[test]
fn overlap_subset_uses_smaller_cardinality() {
    let graph = overlap_matrix(&communities(&[("big", &["a", "b", "c", "d"]), ("sub", &["a", "b"])]))
        .unwrap();
    assert_abs_diff_eq!(graph.matrix()[[0, 1]], 1.0, epsilon = 1e-15);
}

#[test]
fn overlap_rejects_empty_community() {
    let mut cs = communities(&[("ok", &["a"])]);
    cs.push(("empty".to_string(), BTreeSet::new()));
    assert!(overlap_matrix(&cs).is_err());
}

#[test]
fn overlap_matches_direct_set_computation() {
    let cs = communities(&[
        ("e1", &["a", "b", "c", "d"]),
        ("e2", &["c", "d", "e"]),
        ("e3", &["a", "e", "f", "g", "h"]),
    ]);
    let graph = overlap_matrix(&cs).unwrap();
    for i in 0..cs.len() {
        for j in 0..cs.len() {
            let inter = cs[i].1.intersection(&cs[j].1).count() as f64;
            let expect = inter / cs[i].1.len().min(cs[j].1.len()) as f64;
            assert_abs_diff_eq!(graph.matrix()[[i, j]], expect, epsilon = 1e-15);
        }
    }
}

#[test]
fn two_node_laplacian_hand_value() {
    let g = CommunityGraph::from_matrix(
        vec!["a".into(), "b".into()],
        array![[1.0, 0.3], [0.3, 1.0]],
        None,
    )
    .unwrap();
    let l = laplacian(&g);
    assert_abs_diff_eq!(l[[0, 0]], 0.3, epsilon = 1e-15);
    assert_abs_diff_eq!(l[[0, 1]], -0.3, epsilon = 1e-15);
    assert_abs_diff_eq!(l[[1, 0]], -0.3, epsilon = 1e-15);
    assert_abs_diff_eq!(l[[1, 1]], 0.3, epsilon = 1e-15);
}

#[test]
fn laplacian_annihilates_the_ones_vector() {
    let graph = random_graph(8, 42);
    let l = laplacian(&graph);
    for i in 0..8 {
        let row_sum: f64 = (0..8).map(|j| l[[i, j]]).sum();
        assert!(row_sum.abs() < 1e-12, "row {i} sums to {row_sum}");
    }
}

#[test]
fn path_graph_spectrum() {
    let edges = vec![
        ("a".to_string(), "b".to_string(), 1.0),
        ("b".to_string(), "c".to_string(), 1.0),
    ];
    let graph = CommunityGraph::from_edges(&edges).unwrap();
    let (vals, _) = linalg::symmetric_eigen_ascending(&laplacian(&graph)).unwrap();
    assert_abs_diff_eq!(vals[0], 0.0, epsilon = 1e-10);
    assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-10);
    assert_abs_diff_eq!(vals[2], 3.0, epsilon = 1e-10);
}

#[test]
fn laplacian_is_positive_semidefinite() {
    for seed in 0..5 {
        let graph = random_graph(7, seed);
        let (vals, _) = linalg::symmetric_eigen_ascending(&laplacian(&graph)).unwrap();
        assert!(vals[0] >= -1e-10, "negative eigenvalue {}", vals[0]);
    }
}

fn block_clique_graph(sizes: &[usize]) -> CommunityGraph {
    let n: usize = sizes.iter().sum();
    let mut g = Array2::zeros((n, n));
    let mut start = 0;
    for &s in sizes {
        for i in start..start + s {
            for j in start..start + s {
                g[[i, j]] = if i == j { 1.0 } else { 1.0 };
            }
        }
        start += s;
    }
    for i in 0..n {
        g[[i, i]] = 1.0;
    }
    let nodes = (0..n).map(|i| format!("n{i}")).collect();
    CommunityGraph::from_matrix(nodes, g, None).unwrap()
}

#[test]
fn zero_eigenvalue_count_equals_component_count() {
    let graph = block_clique_graph(&[3, 2, 4]);
    let (vals, _) = linalg::symmetric_eigen_ascending(&laplacian(&graph)).unwrap();
    let zeros = vals.iter().filter(|v| v.abs() < 1e-8).count();
    assert_eq!(zeros, 3);
}

#[test]
fn constant_eigenvector_gives_equal_rows_at_k1() {
    let graph = random_graph(6, 7);
    let emb = spectral_embedding(&laplacian(&graph), 1).unwrap();
    for i in 0..6 {
        for j in 0..6 {
            assert!(embedding_distance(&emb, i, j).unwrap() < 1e-9);
        }
    }
}

#[test]
fn disconnected_cliques_separate_in_the_embedding() {
    let graph = block_clique_graph(&[3, 3]);
    let emb = spectral_embedding(&laplacian(&graph), 2).unwrap();
    // null space dimension 2: flagged basis-dependent
    assert!(emb.is_degenerate());
    for i in 0..3 {
        for j in 0..3 {
            assert!(embedding_distance(&emb, i, j).unwrap() < 1e-9);
            assert!(embedding_distance(&emb, 3 + i, 3 + j).unwrap() < 1e-9);
        }
    }
    let across = embedding_distance(&emb, 0, 3).unwrap();
    assert!(across > 0.1, "across-clique distance {across}");
}

#[test]
fn distances_are_invariant_under_node_permutation() {
    // distinct weights keep the spectrum simple
    let edges = vec![
        ("a".to_string(), "b".to_string(), 0.3),
        ("b".to_string(), "c".to_string(), 0.7),
        ("c".to_string(), "d".to_string(), 0.45),
    ];
    let graph = CommunityGraph::from_edges(&edges).unwrap();
    let emb = spectral_embedding(&laplacian(&graph), 2).unwrap();

    let permuted_edges = vec![
        ("c".to_string(), "d".to_string(), 0.45),
        ("b".to_string(), "c".to_string(), 0.7),
        ("a".to_string(), "b".to_string(), 0.3),
    ];
    let graph_p = CommunityGraph::from_edges(&permuted_edges).unwrap();
    let emb_p = spectral_embedding(&laplacian(&graph_p), 2).unwrap();

    for x in ["a", "b", "c", "d"] {
        for y in ["a", "b", "c", "d"] {
            let d1 = embedding_distance(&emb, graph.index_of(x).unwrap(), graph.index_of(y).unwrap())
                .unwrap();
            let d2 =
                embedding_distance(&emb_p, graph_p.index_of(x).unwrap(), graph_p.index_of(y).unwrap())
                    .unwrap();
            assert!((d1 - d2).abs() < 1e-9, "d({x},{y}): {d1} vs {d2}");
        }
    }
}

#[test]
fn embedding_rejects_bad_dimensions() {
    let graph = random_graph(4, 9);
    let l = laplacian(&graph);
    assert!(spectral_embedding(&l, 0).is_err());
    assert!(spectral_embedding(&l, 5).is_err());
}

#[test]
fn embedding_distance_axioms_spot_check() {
    let graph = random_graph(6, 11);
    let emb = spectral_embedding(&laplacian(&graph), 3).unwrap();
    for i in 0..6 {
        assert_eq!(embedding_distance(&emb, i, i).unwrap(), 0.0);
        for j in 0..6 {
            let dij = embedding_distance(&emb, i, j).unwrap();
            let dji = embedding_distance(&emb, j, i).unwrap();
            assert_abs_diff_eq!(dij, dji, epsilon = 1e-15);
        }
    }
    assert!(embedding_distance(&emb, 0, 6).is_err());
}

#[test]
fn ranking_single_candidate_passes_through() {
    let graph = random_graph(5, 13);
    let emb = spectral_embedding(&laplacian(&graph), 2).unwrap();
    let ranked = rank_environments(
        &graph,
        &emb,
        &["n0".to_string()],
        &[("only".to_string(), vec!["n1".to_string(), "n2".to_string()])],
        Aggregation::Mean,
    )
    .unwrap();
    assert_eq!(ranked.len(), 1);
    assert_eq!(ranked[0].name, "only");
}

#[test]
fn ranking_puts_the_test_community_first() {
    let graph = random_graph(5, 14);
    let emb = spectral_embedding(&laplacian(&graph), 2).unwrap();
    let ranked = rank_environments(
        &graph,
        &emb,
        &["n3".to_string()],
        &[
            ("other".to_string(), vec!["n0".to_string(), "n1".to_string()]),
            ("self".to_string(), vec!["n3".to_string()]),
        ],
        Aggregation::Mean,
    )
    .unwrap();
    assert_eq!(ranked[0].name, "self");
    assert_eq!(ranked[0].distance, 0.0);
}

#[test]
fn ranking_prefers_the_test_clique() {
    let graph = block_clique_graph(&[3, 3]);
    let emb = spectral_embedding(&laplacian(&graph), 2).unwrap();
    let ranked = rank_environments(
        &graph,
        &emb,
        &["n0".to_string(), "n1".to_string()],
        &[
            ("far".to_string(), vec!["n3".to_string(), "n4".to_string()]),
            ("near".to_string(), vec!["n2".to_string()]),
        ],
        Aggregation::Mean,
    )
    .unwrap();
    assert_eq!(ranked[0].name, "near");
    assert!(ranked[0].distance < 1e-9);
    assert!(ranked[1].distance > 0.1);
}

#[test]
fn ranking_ties_keep_input_order() {
    let graph = block_clique_graph(&[3, 3]);
    let emb = spectral_embedding(&laplacian(&graph), 2).unwrap();
    let candidates = vec![
        ("first".to_string(), vec!["n1".to_string()]),
        ("second".to_string(), vec!["n2".to_string()]),
    ];
    let ranked = rank_environments(&graph, &emb, &["n0".to_string()], &candidates, Aggregation::Mean)
        .unwrap();
    assert_eq!(ranked[0].name, "first");
    assert_eq!(ranked[1].name, "second");
}

#[test]
fn ranking_min_aggregation_uses_closest_pair() {
    let graph = block_clique_graph(&[3, 3]);
    let emb = spectral_embedding(&laplacian(&graph), 2).unwrap();
    // candidate straddling both cliques is 0 away under min aggregation
    let ranked = rank_environments(
        &graph,
        &emb,
        &["n0".to_string()],
        &[("straddle".to_string(), vec!["n2".to_string(), "n4".to_string()])],
        Aggregation::Min,
    )
    .unwrap();
    assert!(ranked[0].distance < 1e-9);
}

#[test]
fn ranking_rejects_bad_inputs() {
    let graph = random_graph(3, 15);
    let emb = spectral_embedding(&laplacian(&graph), 1).unwrap();
    assert!(rank_environments(&graph, &emb, &[], &[], Aggregation::Mean).is_err());
    assert!(rank_environments(
        &graph,
        &emb,
        &["missing".to_string()],
        &[],
        Aggregation::Mean
    )
    .is_err());
}

#[test]
fn membership_csv_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("members.csv");
    std::fs::write(
        &path,
        "element,community\nimg1,cat\nimg2,cat\nimg2,dog\nimg3,dog\n",
    )
    .unwrap();
    let cs = read_membership_csv(&path).unwrap();
    assert_eq!(cs[0].0, "cat");
    assert_eq!(cs[1].0, "dog");
    let graph = overlap_matrix(&cs).unwrap();
    assert_abs_diff_eq!(graph.matrix()[[0, 1]], 0.5, epsilon = 1e-15);
}

#[test]
fn edge_tsv_parses_and_builds() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("edges.tsv");
    std::fs::write(&path, "node_a\tnode_b\tweight\nx\ty\t0.25\ny\tz\t0.5\n").unwrap();
    let edges = read_edge_tsv(&path).unwrap();
    let graph = CommunityGraph::from_edges(&edges).unwrap();
    assert_eq!(graph.nodes(), &["x", "y", "z"]);
    assert_abs_diff_eq!(graph.matrix()[[0, 1]], 0.25, epsilon = 1e-15);
}

#[test]
fn report_csvs_are_written_with_headers() {
    let dir = tempfile::tempdir().unwrap();
    let graph = random_graph(4, 16);
    let emb = spectral_embedding(&laplacian(&graph), 2).unwrap();
    let epath = dir.path().join("embedding.csv");
    let dpath = dir.path().join("distances.csv");
    let rpath = dir.path().join("ranking.csv");
    write_embedding_csv(&epath, &graph, &emb).unwrap();
    write_distance_matrix_csv(&dpath, &graph, &emb).unwrap();
    write_ranking_csv(
        &rpath,
        &[RankedEnv {
            name: "a".into(),
            distance: 0.5,
        }],
    )
    .unwrap();
    let etext = std::fs::read_to_string(&epath).unwrap();
    assert!(etext.starts_with("node,e0,e1\n"));
    let dtext = std::fs::read_to_string(&dpath).unwrap();
    assert!(dtext.starts_with("node,n0,n1,n2,n3\n"));
    let rtext = std::fs::read_to_string(&rpath).unwrap();
    assert!(rtext.starts_with("rank,env,distance\n"));
    assert!(rtext.contains("1,a,0.5"));
}

#[test]
fn bad_graph_matrices_are_rejected() {
    let nodes = vec!["a".to_string(), "b".to_string()];
    // asymmetric
    assert!(CommunityGraph::from_matrix(
        nodes.clone(),
        array![[1.0, 0.1], [0.2, 1.0]],
        None
    )
    .is_err());
    // out of range weight
    assert!(CommunityGraph::from_matrix(
        nodes.clone(),
        array![[1.0, 1.5], [1.5, 1.0]],
        None
    )
    .is_err());
    // diagonal not 1
    assert!(CommunityGraph::from_matrix(nodes, array![[0.5, 0.0], [0.0, 1.0]], None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, .. ProptestConfig::default() })]

    #[test]
    fn triangle_inequality_holds_on_random_graphs(seed in 0u64..500, n in 3usize..7, k in 1usize..3) {
        let graph = random_graph(n, seed);
        let k = k.min(n);
        let emb = spectral_embedding(&laplacian(&graph), k).unwrap();
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let dij = embedding_distance(&emb, i, j).unwrap();
                    let djl = embedding_distance(&emb, j, l).unwrap();
                    let dil = embedding_distance(&emb, i, l).unwrap();
                    prop_assert!(dil <= dij + djl + 1e-9);
                }
            }
        }
    }
}
