//! On-disk dataset format.
//!
//! A dataset directory contains:
//! - `manifest.json` — `{ "n": int, "views": [edge file names], "features":
//!   file name, "labels": file name or null, "classes": int or null }`
//! - edge files — one `u<TAB>v` pair per line, 0-based ids, each undirected
//!   edge listed once, `#` lines ignored
//! - feature file — binary little-endian: magic `BMGF`, u32 N, u32 d_f, then
//!   N·d_f float32 row-major
//! - label file — one integer per line, N lines

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Labels, MultiRelationalGraph};
use crate::sparse::SparseAdjacency;

const FEATURE_MAGIC: &[u8; 4] = b"BMGF";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    n: usize,
    views: Vec<String>,
    features: String,
    labels: Option<String>,
    classes: Option<usize>,
}

/// Write a graph as a dataset directory readable by [`load_dataset`].
///
/// The edge-file format carries no weights, so graphs with non-unit weights
/// are rejected. Output is byte-stable for identical input.
pub fn write_dataset(g: &MultiRelationalGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut view_names = Vec::new();
    for (v, adj) in g.views().iter().enumerate() {
        let name = format!("view_{v}.edges");
        let mut f = BufWriter::new(fs::File::create(dir.join(&name))?);
        for (i, j, w) in adj.undirected_entries() {
            if (w - 1.0).abs() > 0.0 {
                return Err(Error::Domain(format!(
                    "edge ({i}, {j}) in view {v} has weight {w}; the dataset format is unweighted"
                )));
            }
            writeln!(f, "{i}\t{j}")?;
        }
        f.flush()?;
        view_names.push(name);
    }

    let features_name = "features.bin".to_string();
    {
        let x = g.features();
        let mut f = BufWriter::new(fs::File::create(dir.join(&features_name))?);
        f.write_all(FEATURE_MAGIC)?;
        f.write_all(&(x.nrows() as u32).to_le_bytes())?;
        f.write_all(&(x.ncols() as u32).to_le_bytes())?;
        for row in x.rows() {
            for &v in row.iter() {
                f.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        f.flush()?;
    }

    let labels_name = g.labels().map(|labels| {
        let name = "labels.txt".to_string();
        let mut out = String::new();
        for &y in labels.ids() {
            out.push_str(&y.to_string());
            out.push('\n');
        }
        (name, out)
    });
    if let Some((name, content)) = &labels_name {
        fs::write(dir.join(name), content)?;
    }

    let manifest = Manifest {
        n: g.n(),
        views: view_names,
        features: features_name,
        labels: labels_name.as_ref().map(|(n, _)| n.clone()),
        classes: g.labels().map(|l| l.num_classes()),
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

fn read_edge_file(path: &Path, n: usize) -> Result<SparseAdjacency> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize> {
            tok.ok_or_else(|| {
                Error::Format(format!("{}:{}: expected two node ids", path.display(), lineno + 1))
            })?
            .parse::<usize>()
            .map_err(|_| {
                Error::Format(format!("{}:{}: invalid node id", path.display(), lineno + 1))
            })
        };
        let u = parse(parts.next())?;
        let v = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(Error::Format(format!(
                "{}:{}: trailing tokens",
                path.display(),
                lineno + 1
            )));
        }
        if u >= n || v >= n {
            return Err(Error::Format(format!(
                "{}:{}: node id exceeds manifest n={n}",
                path.display(),
                lineno + 1
            )));
        }
        edges.push((u, v, 1.0));
    }
    SparseAdjacency::from_edges(n, &edges)
}

fn read_features(path: &Path) -> Result<Array2<f64>> {
    let mut f = BufReader::new(
        fs::File::open(path)
            .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?,
    );
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)
        .map_err(|_| Error::Format("feature file truncated".into()))?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::Format("feature file has wrong magic".into()));
    }
    let mut buf4 = [0u8; 4];
    f.read_exact(&mut buf4).map_err(|_| Error::Format("feature file truncated".into()))?;
    let n = u32::from_le_bytes(buf4) as usize;
    f.read_exact(&mut buf4).map_err(|_| Error::Format("feature file truncated".into()))?;
    let d = u32::from_le_bytes(buf4) as usize;
    let mut data = vec![0f64; n * d];
    let mut bytes = vec![0u8; d * 4];
    for i in 0..n {
        f.read_exact(&mut bytes).map_err(|_| Error::Format("feature file truncated".into()))?;
        for j in 0..d {
            let raw: [u8; 4] = bytes[j * 4..j * 4 + 4].try_into().unwrap();
            data[i * d + j] = f32::from_le_bytes(raw) as f64;
        }
    }
    let mut tail = [0u8; 1];
    if f.read(&mut tail)? != 0 {
        return Err(Error::Format("feature file has trailing bytes".into()));
    }
    Array2::from_shape_vec((n, d), data)
        .map_err(|e| Error::Format(format!("feature shape: {e}")))
}

fn read_labels(path: &Path, n: usize, classes: usize) -> Result<Labels> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    let mut ids = Vec::with_capacity(n);
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let y: usize = trimmed.parse().map_err(|_| {
            Error::Format(format!("{}:{}: invalid label", path.display(), lineno + 1))
        })?;
        ids.push(y);
    }
    if ids.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "label file has {} entries for {n} nodes",
            ids.len()
        )));
    }
    Labels::new(ids, classes)
}

/// Load a dataset directory into a fully validated graph.
pub fn load_dataset(dir: &Path) -> Result<MultiRelationalGraph> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::Format(format!("missing manifest.json in {}: {e}", dir.display())))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest.json: {e}")))?;
    if manifest.views.is_empty() {
        return Err(Error::Format("manifest lists no views".into()));
    }

    let features = read_features(&dir.join(&manifest.features))?;
    if features.nrows() != manifest.n {
        return Err(Error::ShapeMismatch(format!(
            "feature file has {} rows but manifest says n={}",
            features.nrows(),
            manifest.n
        )));
    }

    let mut views = Vec::with_capacity(manifest.views.len());
    for name in &manifest.views {
        views.push(read_edge_file(&dir.join(name), manifest.n)?);
    }

    let labels = match (&manifest.labels, manifest.classes) {
        (Some(name), Some(classes)) => Some(read_labels(&dir.join(name), manifest.n, classes)?),
        (Some(_), None) => {
            return Err(Error::Format("manifest lists labels but no class count".into()))
        }
        (None, _) => None,
    };

    MultiRelationalGraph::new(views, features, labels)
}
