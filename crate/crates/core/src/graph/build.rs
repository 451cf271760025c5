use std::collections::{BTreeSet, HashMap};

use super::{GraphKind, WsiGraph};
use crate::clustering::{connected_components, kmeans, Connectivity, LabelGrid, MiniBatchKMeans, BACKGROUND};
use crate::data::{GridCoord, SlideRecord};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng::{self, stream};

pub const DEFAULT_REGIONS: usize = 10;
pub const DEFAULT_CENTROIDS: usize = 9;
/// Slides per mini-batch when fitting dataset-level regions.
pub const DEFAULT_CHUNK: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphOptions {
    pub kind: GraphKind,
    /// Neighbourhood used for patch-graph edges.
    pub patch_connectivity: Connectivity,
    pub k_regions: usize,
    pub k_centroids: usize,
    pub chunk: usize,
    pub seed: u64,
}

impl GraphOptions {
    pub fn new(kind: GraphKind, seed: u64) -> Self {
        Self {
            kind,
            patch_connectivity: Connectivity::Eight,
            k_regions: DEFAULT_REGIONS,
            k_centroids: DEFAULT_CENTROIDS,
            chunk: DEFAULT_CHUNK,
            seed,
        }
    }
}

/// Builds one slide's graph. `global` is required for
/// [`GraphKind::RegionGlobal`].
pub fn build_graph(slide: &SlideRecord, opts: &GraphOptions, global: Option<&GlobalRegions>) -> Result<WsiGraph> {
    let seed = rng::derive(opts.seed, stream::GRAPH);
    match opts.kind {
        GraphKind::Bag => build_bag(slide),
        GraphKind::Patch => build_patch_graph(slide, opts.patch_connectivity),
        GraphKind::RegionLocal => build_region_graph_local(slide, opts.k_regions, seed),
        GraphKind::RegionGlobal => {
            let g = global.ok_or_else(|| Error::invalid("region-global graphs need fitted regions"))?;
            g.build(slide)
        }
        GraphKind::Centroid => build_centroid_graph(slide, opts.k_centroids, seed),
    }
}

/// One isolated node per patch.
pub fn build_bag(slide: &SlideRecord) -> Result<WsiGraph> {
    let n = slide.n_patches();
    WsiGraph::new(slide.slide_id.clone(), slide.features().clone(), Vec::new(), None, singletons(n))
}

/// One node per patch; edges join patches that are grid neighbours under
/// `conn`.
pub fn build_patch_graph(slide: &SlideRecord, conn: Connectivity) -> Result<WsiGraph> {
    let index = coord_index(slide.coords());
    let mut edges = Vec::new();
    for (i, c) in slide.coords().iter().enumerate() {
        for &(dy, dx) in conn.offsets() {
            let nb = GridCoord::new(c.x + dx as i32, c.y + dy as i32);
            if let Some(&j) = index.get(&nb) {
                if j > i {
                    edges.push((i, j));
                }
            }
        }
    }
    WsiGraph::new(slide.slide_id.clone(), slide.features().clone(), edges, None, singletons(slide.n_patches()))
}

/// Region adjacency graph from per-patch cluster labels: regions are
/// 4-connected runs of equal labels, and two regions are joined when any of
/// their patches touch under 8-connectivity.
pub fn region_graph_from_labels(slide: &SlideRecord, labels: &[usize]) -> Result<WsiGraph> {
    if labels.len() != slide.n_patches() {
        return Err(Error::shape("one cluster label per patch required"));
    }
    let coords = slide.coords();
    let min_x = coords.iter().map(|c| c.x).min().expect("non-empty slide");
    let min_y = coords.iter().map(|c| c.y).min().expect("non-empty slide");
    let width = (coords.iter().map(|c| c.x).max().unwrap() - min_x + 1) as usize;
    let height = (coords.iter().map(|c| c.y).max().unwrap() - min_y + 1) as usize;
    let cell = |c: &GridCoord| (c.y - min_y) as usize * width + (c.x - min_x) as usize;

    let mut grid = LabelGrid::background(height, width);
    for (c, &l) in coords.iter().zip(labels) {
        grid.cells[cell(c)] = l as i32;
    }
    let comps = connected_components(&grid, Connectivity::Four);
    let region_of: Vec<usize> = coords.iter().map(|c| comps.regions.cells[cell(c)] as usize).collect();

    let mut members = vec![Vec::new(); comps.count];
    for (p, &r) in region_of.iter().enumerate() {
        members[r].push(p);
    }
    let features = mean_rows_of(slide.features(), &members);

    let mut edges = BTreeSet::new();
    for (p, c) in coords.iter().enumerate() {
        let (row, col) = ((c.y - min_y) as usize, (c.x - min_x) as usize);
        for (nr, nc) in comps.regions.neighbors(row, col, Connectivity::Eight) {
            let other = comps.regions.get(nr, nc);
            if other != BACKGROUND && other as usize != region_of[p] {
                let (a, b) = (region_of[p], other as usize);
                edges.insert((a.min(b), a.max(b)));
            }
        }
    }
    WsiGraph::new(slide.slide_id.clone(), features, edges.into_iter().collect(), None, members)
}

/// Region graph with k-means fitted on this slide's patches alone.
pub fn build_region_graph_local(slide: &SlideRecord, k_regions: usize, seed: u64) -> Result<WsiGraph> {
    let labels = canonical_kmeans(slide, k_regions, seed)?;
    region_graph_from_labels(slide, &labels)
}

/// Dataset-level patch clustering for region graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalRegions {
    model: MiniBatchKMeans,
}

impl GlobalRegions {
    pub fn from_model(model: MiniBatchKMeans) -> Result<Self> {
        if model.centroids().is_none() {
            return Err(Error::invalid("global regions need fitted centroids"));
        }
        Ok(Self { model })
    }

    pub fn model(&self) -> &MiniBatchKMeans {
        &self.model
    }

    pub fn centroids(&self) -> &Matrix {
        self.model.centroids().expect("checked at construction")
    }

    pub fn build(&self, slide: &SlideRecord) -> Result<WsiGraph> {
        let labels = self.model.predict(slide.features())?;
        region_graph_from_labels(slide, &labels)
    }
}

/// Streams `slides` in chunks of `chunk` slides, each chunk one mini-batch
/// update.
pub fn fit_global_regions<'a>(
    slides: impl IntoIterator<Item = &'a SlideRecord>,
    k_regions: usize,
    chunk: usize,
    seed: u64,
) -> Result<GlobalRegions> {
    if chunk == 0 {
        return Err(Error::invalid("chunk size must be positive"));
    }
    let mut model = MiniBatchKMeans::new(k_regions, seed)?;
    let mut batch: Vec<&SlideRecord> = Vec::with_capacity(chunk);
    let mut any = false;
    let flush = |batch: &mut Vec<&SlideRecord>, model: &mut MiniBatchKMeans| -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        let rows: usize = batch.iter().map(|s| s.n_patches()).sum();
        let cols = batch[0].feature_dim();
        let mut data = Vec::with_capacity(rows * cols);
        for s in batch.iter() {
            if s.feature_dim() != cols {
                return Err(Error::Malformed("slides disagree on feature dimension".into()));
            }
            data.extend_from_slice(s.features().data());
        }
        batch.clear();
        model.partial_fit(&Matrix::from_vec(rows, cols, data)?)
    };
    for s in slides {
        any = true;
        batch.push(s);
        if batch.len() == chunk {
            flush(&mut batch, &mut model)?;
        }
    }
    flush(&mut batch, &mut model)?;
    if !any {
        return Err(Error::Empty("no slides to fit regions on".into()));
    }
    GlobalRegions::from_model(model)
}

/// Fits dataset-level regions on `slides` and builds every slide's graph.
pub fn build_region_graph_global(
    slides: &[SlideRecord],
    k_regions: usize,
    chunk: usize,
    seed: u64,
) -> Result<(GlobalRegions, Vec<WsiGraph>)> {
    let regions = fit_global_regions(slides, k_regions, chunk, seed)?;
    let graphs = slides.iter().map(|s| regions.build(s)).collect::<Result<_>>()?;
    Ok((regions, graphs))
}

/// Fully connected graph over the slide's `k` k-means clusters, weighted by
/// cosine distance between cluster mean features.
pub fn build_centroid_graph(slide: &SlideRecord, k: usize, seed: u64) -> Result<WsiGraph> {
    let labels = canonical_kmeans(slide, k, seed)?;
    let mut members = vec![Vec::new(); k];
    for (p, &l) in labels.iter().enumerate() {
        members[l].push(p);
    }
    let features = mean_rows_of(slide.features(), &members);
    let norms: Vec<f64> = features.iter_rows().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if norms.contains(&0.0) {
        return Err(Error::invalid("zero-norm centroid feature; cosine distance undefined"));
    }
    let mut edges = Vec::with_capacity(k * (k.saturating_sub(1)) / 2);
    let mut weights = Vec::with_capacity(edges.capacity());
    for i in 0..k {
        for j in i + 1..k {
            let dot: f64 = features.row(i).iter().zip(features.row(j)).map(|(a, b)| a * b).sum();
            let cos = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            edges.push((i, j));
            weights.push(1.0 - cos);
        }
    }
    WsiGraph::new(slide.slide_id.clone(), features, edges, Some(weights), members)
}

/// k-means over the slide's patches taken in coordinate order, so that the
/// clustering does not depend on how patches happen to be stored.
fn canonical_kmeans(slide: &SlideRecord, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = slide.n_patches();
    if k == 0 || n < k {
        return Err(Error::invalid(format!("{n} patches cannot form {k} clusters")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| {
        let c = slide.coords()[i];
        (c.y, c.x)
    });
    let fit = kmeans(&slide.features().select_rows(&order), k, seed)?;
    let mut labels = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = fit.assignments[pos];
    }
    Ok(labels)
}

fn coord_index(coords: &[GridCoord]) -> HashMap<GridCoord, usize> {
    coords.iter().enumerate().map(|(i, &c)| (c, i)).collect()
}

fn singletons(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|i| vec![i]).collect()
}

fn mean_rows_of(x: &Matrix, groups: &[Vec<usize>]) -> Matrix {
    let mut out = Matrix::zeros(groups.len(), x.cols());
    for (g, idx) in groups.iter().enumerate() {
        let row = out.row_mut(g);
        for &i in idx {
            for (o, v) in row.iter_mut().zip(x.row(i)) {
                *o += v;
            }
        }
        let inv = idx.len() as f64;
        row.iter_mut().for_each(|v| *v /= inv);
    }
    out
}
