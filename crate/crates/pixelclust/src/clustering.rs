//! Hard k-means over pixel-vectors and the resulting pixel partitions.
//!
//! The clustering here is deliberately boring Lloyd iteration; what it
//! guarantees is the part that matters downstream:
//!
//! * every requested cluster is non-empty in the result, so a partition
//!   always yields a full set of regions;
//! * runs are deterministic functions of (vectors, config), independent
//!   of thread count;
//! * relabeling the pixels relabels the result: initialization and
//!   centroid arithmetic depend only on the multiset of vector values,
//!   never on pixel numbering.
//!
//! Determinism is achieved by seeding initialization from a sorted list
//! of distinct vector values and by summing cluster members in a
//! canonical value order, so floating-point reductions do not depend on
//! pixel order or scheduling.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pixelspace::PixelVectorSet;

/// Parameters for one k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    /// Number of clusters to form. Must not exceed the number of
    /// distinct pixel-vectors.
    pub clusters: usize,
    /// Seed for centroid initialization.
    pub seed: u64,
    /// Hard cap on Lloyd iterations.
    pub max_iterations: usize,
    /// Stop once no centroid moves farther than this between updates.
    pub tolerance: f64,
}

impl KMeansConfig {
    pub fn new(clusters: usize, seed: u64) -> Self {
        Self {
            clusters,
            seed,
            max_iterations: 300,
            tolerance: 1e-6,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::InvalidArgument(
                "cluster count must be at least 1".to_string(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "max_iterations must be at least 1".to_string(),
            ));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be finite and non-negative, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// An assignment of every pixel position of a `width x height` grid to
/// one of `cluster_count` non-empty clusters.
///
/// Cluster ids are canonical: clusters are numbered by their smallest
/// member pixel index, so the pixel at index 0 is always in cluster 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignments: Vec<usize>,
    cluster_count: usize,
    width: usize,
    height: usize,
}

impl Partition {
    /// Validates that `assignments` covers a `width x height` grid, that
    /// every id is below `cluster_count`, and that no cluster is empty.
    pub fn new(
        assignments: Vec<usize>,
        cluster_count: usize,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "partition grid must be at least 1x1, got {width}x{height}"
            )));
        }
        if assignments.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: assignments.len(),
            });
        }
        if cluster_count == 0 {
            return Err(Error::InvalidArgument(
                "cluster count must be at least 1".to_string(),
            ));
        }
        let mut sizes = vec![0usize; cluster_count];
        for &c in &assignments {
            if c >= cluster_count {
                return Err(Error::InvalidArgument(format!(
                    "cluster id {c} out of range for {cluster_count} clusters"
                )));
            }
            sizes[c] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyCluster { cluster: empty });
        }
        Ok(Self {
            assignments,
            cluster_count,
            width,
            height,
        })
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn cluster_of(&self, pixel: usize) -> usize {
        self.assignments[pixel]
    }

    pub fn same_cluster(&self, a: usize, b: usize) -> bool {
        self.assignments[a] == self.assignments[b]
    }

    pub fn cluster_count(&self) -> usize {
        self.cluster_count
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.assignments.len()
    }

    /// Member pixel indices of one cluster, ascending.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&j| self.assignments[j] == cluster)
            .collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.cluster_count];
        for &c in &self.assignments {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Lexicographic comparison of vectors by `f64::total_cmp`, the canonical
/// value order used for initialization and summation.
fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Index of the nearest centroid, lowest id on exact ties. The running
/// partial sum lets us abandon a centroid early once it cannot beat the
/// best so far; the winner is identical to the exhaustive scan.
fn nearest_centroid(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.iter().enumerate() {
        let mut d = 0.0;
        for (a, b) in x.iter().zip(c) {
            let t = a - b;
            d += t * t;
            if d >= best_d {
                break;
            }
        }
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

fn assign_all(set: &PixelVectorSet, centroids: &[Vec<f64>]) -> Vec<usize> {
    set.vectors()
        .par_iter()
        .map(|x| nearest_centroid(x, centroids))
        .collect()
}

/// Mean of the given member vectors, summed in canonical value order so
/// the result does not depend on pixel numbering.
fn centroid_of(set: &PixelVectorSet, members: &[usize]) -> Vec<f64> {
    let mut refs: Vec<&Vec<f64>> = members.iter().map(|&j| &set.vectors()[j]).collect();
    refs.sort_by(|a, b| lex_cmp(a, b));
    let mut sum = vec![0.0; set.dim()];
    for v in refs {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let count = members.len() as f64;
    for s in &mut sum {
        *s /= count;
    }
    sum
}

fn members_by_cluster(assignments: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); k];
    for (pixel, &c) in assignments.iter().enumerate() {
        members[c].push(pixel);
    }
    members
}

/// Fills every empty cluster by splitting the loosest populated one:
/// the donor is the cluster (of at least two members) with the largest
/// mean squared distance to its centroid, lowest id on ties; its
/// farthest member, lowest pixel index on ties, becomes the empty
/// cluster's sole member and centroid. Each move strictly lowers the
/// objective, so repair never undoes convergence.
fn repair_empty_clusters(
    set: &PixelVectorSet,
    assignments: &mut [usize],
    centroids: &mut [Vec<f64>],
) {
    let k = centroids.len();
    loop {
        let members = members_by_cluster(assignments, k);
        let Some(empty) = members.iter().position(Vec::is_empty) else {
            return;
        };

        let mut donor = usize::MAX;
        let mut donor_spread = -1.0;
        for (c, m) in members.iter().enumerate() {
            if m.len() < 2 {
                continue;
            }
            let spread = m
                .iter()
                .map(|&j| squared_distance(&set.vectors()[j], &centroids[c]))
                .sum::<f64>()
                / m.len() as f64;
            if spread > donor_spread {
                donor_spread = spread;
                donor = c;
            }
        }
        // A donor always exists: an empty cluster among k <= n pixels
        // forces some cluster to hold at least two.
        debug_assert!(donor != usize::MAX);

        let mut moved = usize::MAX;
        let mut moved_d = -1.0;
        for &j in &members[donor] {
            let d = squared_distance(&set.vectors()[j], &centroids[donor]);
            if d > moved_d {
                moved_d = d;
                moved = j;
            }
        }

        assignments[moved] = empty;
        centroids[empty] = set.vectors()[moved].clone();
        let remaining: Vec<usize> = members[donor]
            .iter()
            .copied()
            .filter(|&j| j != moved)
            .collect();
        centroids[donor] = centroid_of(set, &remaining);
    }
}

fn max_displacement(old: &[Vec<f64>], new: &[Vec<f64>]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(a, b)| squared_distance(a, b).sqrt())
        .fold(0.0, f64::max)
}

fn wcss_of(set: &PixelVectorSet, assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(j, &c)| squared_distance(&set.vectors()[j], &centroids[c]))
        .sum()
}

/// Distinct vector values in canonical order; initialization samples
/// from this list, so pixel numbering cannot influence the seeds.
fn initial_centroids(set: &PixelVectorSet, cfg: &KMeansConfig) -> Result<Vec<Vec<f64>>> {
    let mut distinct: Vec<&Vec<f64>> = set.vectors().iter().collect();
    distinct.sort_by(|a, b| lex_cmp(a, b));
    distinct.dedup_by(|a, b| lex_cmp(a, b) == Ordering::Equal);

    if cfg.clusters > distinct.len() {
        return Err(Error::ClusterCount {
            requested: cfg.clusters,
            distinct: distinct.len(),
            total: set.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let picks = rand::seq::index::sample(&mut rng, distinct.len(), cfg.clusters);
    Ok(picks.iter().map(|i| distinct[i].clone()).collect())
}

/// Renumbers clusters by smallest member pixel index, in place.
fn canonicalize(assignments: &mut [usize], k: usize) {
    let mut remap = vec![usize::MAX; k];
    let mut next = 0usize;
    for &c in assignments.iter() {
        if remap[c] == usize::MAX {
            remap[c] = next;
            next += 1;
        }
    }
    debug_assert_eq!(next, k);
    for c in assignments.iter_mut() {
        *c = remap[*c];
    }
}

fn run_lloyd(set: &PixelVectorSet, cfg: &KMeansConfig) -> Result<(Vec<usize>, Vec<f64>)> {
    cfg.validate()?;
    let mut centroids = initial_centroids(set, cfg)?;
    // Initial centroids are distinct existing values, so every cluster
    // starts with its source pixels and no repair is needed yet.
    let mut assignments = assign_all(set, &centroids);
    let mut trace = Vec::new();

    for _ in 0..cfg.max_iterations {
        let previous = centroids.clone();
        let members = members_by_cluster(&assignments, cfg.clusters);
        for (c, m) in members.iter().enumerate() {
            if !m.is_empty() {
                centroids[c] = centroid_of(set, m);
            }
        }
        repair_empty_clusters(set, &mut assignments, &mut centroids);

        trace.push(wcss_of(set, &assignments, &centroids));

        if max_displacement(&previous, &centroids) < cfg.tolerance {
            break;
        }
        let next = assign_all(set, &centroids);
        if next == assignments {
            break;
        }
        assignments = next;
    }

    canonicalize(&mut assignments, cfg.clusters);
    Ok((assignments, trace))
}

/// Clusters the pixel-vectors into `cfg.clusters` non-empty groups.
pub fn kmeans(set: &PixelVectorSet, cfg: &KMeansConfig) -> Result<Partition> {
    let (assignments, _) = run_lloyd(set, cfg)?;
    Partition::new(assignments, cfg.clusters, set.width(), set.height())
}

/// Like [`kmeans`], also returning the objective value after every
/// iteration. The sequence never increases, which makes it a cheap
/// sanity probe for the iteration itself.
pub fn kmeans_traced(set: &PixelVectorSet, cfg: &KMeansConfig) -> Result<(Partition, Vec<f64>)> {
    let (assignments, trace) = run_lloyd(set, cfg)?;
    let partition = Partition::new(assignments, cfg.clusters, set.width(), set.height())?;
    Ok((partition, trace))
}

/// Runs `restarts` independent clusterings seeded `cfg.seed`,
/// `cfg.seed + 1`, ... and keeps the one with the lowest objective,
/// earliest seed on ties. Lloyd iteration only finds a local optimum;
/// restarts are the standard hedge when the global one matters.
pub fn kmeans_restarts(
    set: &PixelVectorSet,
    cfg: &KMeansConfig,
    restarts: usize,
) -> Result<Partition> {
    if restarts == 0 {
        return Err(Error::InvalidArgument(
            "restarts must be at least 1".to_string(),
        ));
    }
    let mut best: Option<(f64, Partition)> = None;
    for i in 0..restarts {
        let run_cfg = KMeansConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..cfg.clone()
        };
        let partition = kmeans(set, &run_cfg)?;
        let objective = wcss(set, &partition)?;
        if best.as_ref().is_none_or(|(b, _)| objective < *b) {
            best = Some((objective, partition));
        }
    }
    Ok(best.expect("restarts >= 1").1)
}

/// Within-cluster sum of squares of a partition: each cluster's members'
/// squared distances to the cluster mean, totalled. Centroids are
/// recomputed here from scratch, so this is an independent read on any
/// partition, however it was produced.
pub fn wcss(set: &PixelVectorSet, partition: &Partition) -> Result<f64> {
    if partition.pixel_count() != set.len() {
        return Err(Error::DimensionMismatch {
            expected: set.len(),
            found: partition.pixel_count(),
        });
    }
    let members = members_by_cluster(partition.assignments(), partition.cluster_count());
    let centroids: Vec<Vec<f64>> = members.iter().map(|m| centroid_of(set, m)).collect();
    Ok(wcss_of(set, partition.assignments(), &centroids))
}

/// Writes a partition as text: a `width height clusters` header line,
/// then one `pixel_index cluster_id` line per pixel in ascending pixel
/// order.
pub fn save_partition(partition: &Partition, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "{} {} {}\n",
        partition.width(),
        partition.height(),
        partition.cluster_count()
    ));
    for (pixel, &cluster) in partition.assignments().iter().enumerate() {
        out.push_str(&format!("{pixel} {cluster}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a partition written by [`save_partition`]. Every pixel must
/// appear exactly once; cluster ids must be in range and all used.
pub fn load_partition(path: &Path) -> Result<Partition> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::ModelFormat {
        path: path.to_path_buf(),
        reason,
    };

    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".to_string()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(bad(format!(
            "header must be `width height clusters`, got `{header}`"
        )));
    }
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| bad(format!("invalid {what} `{s}`")))
    };
    let width = parse(fields[0], "width")?;
    let height = parse(fields[1], "height")?;
    let clusters = parse(fields[2], "cluster count")?;
    if width == 0 || height == 0 {
        return Err(bad(format!("degenerate grid {width}x{height}")));
    }

    let n = width * height;
    let mut assignments = vec![usize::MAX; n];
    let mut filled = 0usize;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(bad(format!(
                "expected `pixel_index cluster_id`, got `{line}`"
            )));
        }
        let pixel = parse(fields[0], "pixel index")?;
        let cluster = parse(fields[1], "cluster id")?;
        if pixel >= n {
            return Err(bad(format!("pixel index {pixel} out of range for {n}")));
        }
        if assignments[pixel] != usize::MAX {
            return Err(bad(format!("pixel index {pixel} listed twice")));
        }
        assignments[pixel] = cluster;
        filled += 1;
    }
    if filled != n {
        return Err(bad(format!("{filled} of {n} pixels assigned")));
    }
    Partition::new(assignments, clusters, width, height)
}
