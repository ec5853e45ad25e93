//! Graph input and report output formats.
//!
//! Inputs (header row required):
//! - membership CSV `element,community` — communities in first-appearance
//!   order, overlap weights computed from the element sets;
//! - edge TSV `node_a<TAB>node_b<TAB>weight` — explicit weights in [0, 1].
//!
//! Outputs: embedding CSV `node,e0..e{k-1}`, a square distance-matrix CSV
//! with node names as header, and a ranking CSV `rank,env,distance`.

use std::collections::BTreeSet;
use std::path::Path;

use super::{embedding_distance, CommunityGraph, RankedEnv, SpectralEmbedding};
use crate::error::{Error, Result};

/// Reads `element,community` rows into named element sets.
pub fn read_membership_csv(path: impl AsRef<Path>) -> Result<Vec<(String, BTreeSet<String>)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("element") || header.get(1) != Some("community") {
        return Err(Error::InvalidSpec(
            "membership CSV header must be element,community".into(),
        ));
    }
    let mut order: Vec<String> = Vec::new();
    let mut sets: std::collections::BTreeMap<String, BTreeSet<String>> = Default::default();
    for record in rdr.records() {
        let record = record?;
        let element = record
            .get(0)
            .ok_or_else(|| Error::InvalidSpec("membership row missing element".into()))?;
        let community = record
            .get(1)
            .ok_or_else(|| Error::InvalidSpec("membership row missing community".into()))?;
        if !sets.contains_key(community) {
            order.push(community.to_string());
        }
        sets.entry(community.to_string())
            .or_default()
            .insert(element.to_string());
    }
    if order.is_empty() {
        return Err(Error::EmptyInput("membership CSV has no rows"));
    }
    Ok(order
        .into_iter()
        .map(|name| {
            let set = sets.remove(&name).expect("recorded community");
            (name, set)
        })
        .collect())
}

/// Reads a tab-separated edge list with header `node_a,node_b,weight`.
pub fn read_edge_tsv(path: impl AsRef<Path>) -> Result<Vec<(String, String, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(b'\t').from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("node_a") || header.get(1) != Some("node_b") || header.get(2) != Some("weight") {
        return Err(Error::InvalidSpec(
            "edge TSV header must be node_a,node_b,weight".into(),
        ));
    }
    let mut edges = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let a = record
            .get(0)
            .ok_or_else(|| Error::InvalidSpec("edge row missing node_a".into()))?;
        let b = record
            .get(1)
            .ok_or_else(|| Error::InvalidSpec("edge row missing node_b".into()))?;
        let w: f64 = record
            .get(2)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::InvalidSpec("non-numeric edge weight".into()))?;
        edges.push((a.to_string(), b.to_string(), w));
    }
    if edges.is_empty() {
        return Err(Error::EmptyInput("edge TSV has no rows"));
    }
    Ok(edges)
}

/// `node,e0..e{k-1}` rows.
pub fn write_embedding_csv(
    path: impl AsRef<Path>,
    graph: &CommunityGraph,
    emb: &SpectralEmbedding,
) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header = vec!["node".to_string()];
    header.extend((0..emb.k()).map(|j| format!("e{j}")));
    wtr.write_record(&header)?;
    for (i, node) in graph.nodes().iter().enumerate() {
        let mut rec = vec![node.clone()];
        rec.extend(emb.row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Square pairwise-distance matrix with node names along both axes.
pub fn write_distance_matrix_csv(
    path: impl AsRef<Path>,
    graph: &CommunityGraph,
    emb: &SpectralEmbedding,
) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header = vec!["node".to_string()];
    header.extend(graph.nodes().iter().cloned());
    wtr.write_record(&header)?;
    for (i, node) in graph.nodes().iter().enumerate() {
        let mut rec = vec![node.clone()];
        for j in 0..graph.len() {
            rec.push(embedding_distance(emb, i, j)?.to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// `rank,env,distance` rows, rank starting at 1.
pub fn write_ranking_csv(path: impl AsRef<Path>, ranking: &[RankedEnv]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["rank", "env", "distance"])?;
    for (i, r) in ranking.iter().enumerate() {
        wtr.write_record([(i + 1).to_string(), r.name.clone(), r.distance.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
