use std::fs;
use std::path::Path;

use crate::data::{check_magic, read_array};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::WsiGraph;

pub const FEATURE_MAGIC: &[u8; 4] = b"GMIF";
const FEATURE_VERSION: u16 = 1;

/// Writes `# nodes N` followed by one `i j` (or `i j w`) line per edge.
pub fn write_edge_list(graph: &WsiGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("# nodes {}\n", graph.n_nodes());
    for (k, &(i, j)) in graph.edges().iter().enumerate() {
        match graph.edge_weights() {
            Some(w) => out.push_str(&format!("{i} {j} {}\n", w[k])),
            None => out.push_str(&format!("{i} {j}\n")),
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Node count, undirected edges and optional edge weights.
pub type EdgeList = (usize, Vec<(usize, usize)>, Option<Vec<f64>>);

pub fn read_edge_list(text: &str) -> Result<EdgeList> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Malformed("empty edge list".into()))?;
    let n = header
        .strip_prefix("# nodes ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Malformed(format!("bad edge-list header {header:?}")))?;
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Malformed(format!("bad edge line {line:?}")));
        match parts.as_slice() {
            [a, b] => edges.push((num(a)?, num(b)?)),
            [a, b, w] => {
                edges.push((num(a)?, num(b)?));
                weights.push(w.parse::<f64>().map_err(|_| Error::Malformed(format!("bad weight in {line:?}")))?);
            }
            _ => return Err(Error::Malformed(format!("bad edge line {line:?}"))),
        }
    }
    if !weights.is_empty() && weights.len() != edges.len() {
        return Err(Error::Malformed("some edges lack weights".into()));
    }
    Ok((n, edges, (!weights.is_empty()).then_some(weights)))
}

/// Node features as magic, version, `N u32`, `F u32`, then `N × F` f32
/// row-major (little-endian).
pub fn write_feature_sidecar(features: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let (n, f) = features.shape();
    let mut out = Vec::with_capacity(14 + n * f * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(f as u32).to_le_bytes());
    for v in features.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_feature_sidecar(bytes: &[u8]) -> Result<Matrix> {
    let mut r = bytes;
    check_magic(FEATURE_MAGIC, &read_array(&mut r)?)?;
    let version = u16::from_le_bytes(read_array(&mut r)?);
    if version != FEATURE_VERSION {
        return Err(Error::VersionMismatch { expected: FEATURE_VERSION, found: version });
    }
    let n = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let f = u32::from_le_bytes(read_array(&mut r)?) as usize;
    if r.len() < n * f * 4 {
        return Err(Error::Truncated);
    }
    let data = r[..n * f * 4]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Matrix::from_vec(n, f, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_list_round_trip() {
        let feats = Matrix::from_rows(&[[1.0, 0.5], [0.25, 2.0], [3.0, 1.0]]).unwrap();
        let g = WsiGraph::new("g", feats.clone(), vec![(0, 1), (1, 2)], Some(vec![0.125, 1.5]), vec![vec![0], vec![1], vec![2]])
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_edge_list(&g, dir.path().join("g.edges")).unwrap();
        let text = fs::read_to_string(dir.path().join("g.edges")).unwrap();
        assert!(text.starts_with("# nodes 3\n0 1 0.125\n"));
        let (n, edges, w) = read_edge_list(&text).unwrap();
        assert_eq!((n, edges.as_slice(), w.unwrap()), (3, g.edges(), vec![0.125, 1.5]));

        write_feature_sidecar(&feats, dir.path().join("g.feat")).unwrap();
        let back = read_feature_sidecar(&fs::read(dir.path().join("g.feat")).unwrap()).unwrap();
        assert_eq!(back, feats);
    }

    #[test]
    fn sidecar_errors() {
        assert!(matches!(read_feature_sidecar(b"GMIF\x01\x00\x01\x00\x00\x00"), Err(Error::Truncated)));
        assert!(matches!(read_feature_sidecar(b"XXXX\x01\x00"), Err(Error::BadMagic { .. })));
    }
}
