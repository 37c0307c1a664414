//! Region-mean feature extraction built on a pixel partition.
//!
//! A partition of the pixel grid into n regions induces a linear map
//! from images to n features: feature k is the mean intensity over
//! region k. Equivalently, the map is the n x (w*h) matrix with value
//! `1/|region k|` at row k, column j for every member pixel j. The
//! matrix is stored sparsely as the member lists themselves; weights
//! are implied.
//!
//! A [`ProjectionMatrix`] need not cover the whole grid: dropping rows
//! (see [`SelectionPlan`]) leaves the remaining regions untouched, so a
//! reduced model produces exactly the same values for the features it
//! keeps.

use std::fs;
use std::path::Path;

use crate::clustering::Partition;
use crate::dataset::ImageMatrix;
use crate::error::{Error, Result};
use crate::pixelspace::pixel_position;

/// Features of one image under a projection: one mean per region.
pub type FeatureVector = Vec<f64>;

/// A sparse region-mean projection. Rows are disjoint, non-empty pixel
/// index sets over a fixed grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionMatrix {
    regions: Vec<Vec<usize>>,
    width: usize,
    height: usize,
}

impl ProjectionMatrix {
    /// Builds a projection from explicit regions. Each region must be
    /// non-empty and strictly ascending; regions must be pairwise
    /// disjoint and stay inside the `width x height` grid.
    pub fn from_regions(regions: Vec<Vec<usize>>, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "projection grid must be at least 1x1, got {width}x{height}"
            )));
        }
        if regions.is_empty() {
            return Err(Error::InvalidArgument(
                "projection needs at least one region".to_string(),
            ));
        }
        let n = width * height;
        let mut owner = vec![false; n];
        for (k, region) in regions.iter().enumerate() {
            if region.is_empty() {
                return Err(Error::EmptyCluster { cluster: k });
            }
            for window in region.windows(2) {
                if window[0] >= window[1] {
                    return Err(Error::InvalidArgument(format!(
                        "region {k} is not strictly ascending"
                    )));
                }
            }
            for &j in region {
                if j >= n {
                    return Err(Error::InvalidArgument(format!(
                        "pixel index {j} out of range for a {width}x{height} grid"
                    )));
                }
                if owner[j] {
                    return Err(Error::InvalidArgument(format!(
                        "pixel index {j} belongs to two regions"
                    )));
                }
                owner[j] = true;
            }
        }
        Ok(Self {
            regions,
            width,
            height,
        })
    }

    /// Number of features this projection produces.
    pub fn feature_count(&self) -> usize {
        self.regions.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn regions(&self) -> &[Vec<usize>] {
        &self.regions
    }

    /// True when every pixel of the grid belongs to some region.
    pub fn covers_grid(&self) -> bool {
        self.regions.iter().map(Vec::len).sum::<usize>() == self.pixel_count()
    }

    /// The projection as a dense row-major matrix, one row per region.
    /// Intended for inspection and small-scale checks.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.pixel_count();
        self.regions
            .iter()
            .map(|region| {
                let mut row = vec![0.0; n];
                let weight = 1.0 / region.len() as f64;
                for &j in region {
                    row[j] = weight;
                }
                row
            })
            .collect()
    }

    /// Keeps only the rows named by `plan`, in ascending row order.
    pub fn select(&self, plan: &SelectionPlan) -> Result<ProjectionMatrix> {
        if plan.feature_count() != self.feature_count() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count(),
                found: plan.feature_count(),
            });
        }
        let regions = plan.kept().iter().map(|&k| self.regions[k].clone()).collect();
        ProjectionMatrix::from_regions(regions, self.width, self.height)
    }
}

/// Turns a pixel partition into the region-mean projection over the
/// same grid. Row order follows cluster ids.
pub fn build_projection(partition: &Partition) -> ProjectionMatrix {
    let regions: Vec<Vec<usize>> = (0..partition.cluster_count())
        .map(|c| partition.members(c))
        .collect();
    ProjectionMatrix {
        regions,
        width: partition.width(),
        height: partition.height(),
    }
}

/// Projects a vectorized image: feature k is the mean of `x` over
/// region k, members summed in ascending pixel order.
pub fn project(w: &ProjectionMatrix, x: &[f64]) -> Result<FeatureVector> {
    if x.len() != w.pixel_count() {
        return Err(Error::DimensionMismatch {
            expected: w.pixel_count(),
            found: x.len(),
        });
    }
    Ok(w
        .regions
        .iter()
        .map(|region| region.iter().map(|&j| x[j]).sum::<f64>() / region.len() as f64)
        .collect())
}

/// Expands features back to pixel space: every pixel takes its region's
/// feature value; pixels outside all regions take `fill`.
pub fn reconstruct(w: &ProjectionMatrix, features: &[f64], fill: f64) -> Result<Vec<f64>> {
    if features.len() != w.feature_count() {
        return Err(Error::DimensionMismatch {
            expected: w.feature_count(),
            found: features.len(),
        });
    }
    let mut x = vec![fill; w.pixel_count()];
    for (region, &value) in w.regions.iter().zip(features) {
        for &j in region {
            x[j] = value;
        }
    }
    Ok(x)
}

/// Mean squared error of projecting `x` and reconstructing it, the
/// per-pixel price of replacing intensities with region means.
pub fn representation_error(w: &ProjectionMatrix, x: &[f64], fill: f64) -> Result<f64> {
    let back = reconstruct(w, &project(w, x)?, fill)?;
    let sum: f64 = x
        .iter()
        .zip(&back)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok(sum / x.len() as f64)
}

/// Per-feature sample variance across a set of feature vectors.
/// A single sample yields all zeros.
pub fn feature_variances(features: &[FeatureVector]) -> Result<Vec<f64>> {
    let first = features
        .first()
        .ok_or_else(|| Error::InvalidArgument("no feature vectors".to_string()))?;
    let n = first.len();
    if features.iter().any(|f| f.len() != n) {
        return Err(Error::InvalidArgument(
            "feature vectors differ in length".to_string(),
        ));
    }
    let m = features.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        if m < 2 {
            out.push(0.0);
            continue;
        }
        let mean = features.iter().map(|f| f[k]).sum::<f64>() / m as f64;
        let ss = features
            .iter()
            .map(|f| {
                let d = f[k] - mean;
                d * d
            })
            .sum::<f64>();
        out.push(ss / (m - 1) as f64);
    }
    Ok(out)
}

/// A choice of feature indices to keep, in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionPlan {
    kept: Vec<usize>,
    feature_count: usize,
}

impl SelectionPlan {
    /// Indices kept, ascending.
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn kept_count(&self) -> usize {
        self.kept.len()
    }

    /// Length of the full feature vectors this plan applies to.
    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    /// Extracts the kept entries of a full feature vector.
    pub fn apply(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.feature_count {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count,
                found: features.len(),
            });
        }
        Ok(self.kept.iter().map(|&k| features[k]).collect())
    }
}

/// Plans to keep the `keep` features with the largest variance, lowest
/// index on ties, reported in ascending index order.
pub fn select_top_variance(variances: &[f64], keep: usize) -> Result<SelectionPlan> {
    if keep == 0 || keep > variances.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot keep {keep} of {} features",
            variances.len()
        )));
    }
    if let Some(bad) = variances.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite variance {bad}")));
    }
    let mut order: Vec<usize> = (0..variances.len()).collect();
    // Stable sort: equal variances keep ascending index order.
    order.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]));
    let mut kept: Vec<usize> = order[..keep].to_vec();
    kept.sort_unstable();
    Ok(SelectionPlan {
        kept,
        feature_count: variances.len(),
    })
}

/// Writes a projection as text: a `width height rows pixels` header,
/// then one `size index...` line per region in row order.
pub fn save_projection(w: &ProjectionMatrix, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "{} {} {} {}\n",
        w.width(),
        w.height(),
        w.feature_count(),
        w.pixel_count()
    ));
    for region in w.regions() {
        out.push_str(&region.len().to_string());
        for &j in region {
            out.push(' ');
            out.push_str(&j.to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a projection written by [`save_projection`], re-validating
/// every structural invariant.
pub fn load_projection(path: &Path) -> Result<ProjectionMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::ModelFormat {
        path: path.to_path_buf(),
        reason,
    };
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| bad(format!("invalid {what} `{s}`")))
    };

    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".to_string()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(bad(format!(
            "header must be `width height rows pixels`, got `{header}`"
        )));
    }
    let width = parse(fields[0], "width")?;
    let height = parse(fields[1], "height")?;
    let rows = parse(fields[2], "row count")?;
    let pixels = parse(fields[3], "pixel count")?;
    if pixels != width * height {
        return Err(bad(format!(
            "pixel count {pixels} does not match {width}x{height}"
        )));
    }

    let mut regions = Vec::with_capacity(rows);
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let size = parse(fields[0], "region size")?;
        if fields.len() != size + 1 {
            return Err(bad(format!(
                "region declares {size} members but lists {}",
                fields.len() - 1
            )));
        }
        let mut region = Vec::with_capacity(size);
        for f in &fields[1..] {
            region.push(parse(f, "pixel index")?);
        }
        regions.push(region);
    }
    if regions.len() != rows {
        return Err(bad(format!(
            "header declares {rows} rows but file has {}",
            regions.len()
        )));
    }
    ProjectionMatrix::from_regions(regions, width, height)
}

/// Renders a partition as a grayscale image: region k maps to the gray
/// level `k / (clusters - 1)`, so region ids spread evenly over the
/// intensity range. A single-region partition renders black.
pub fn region_map_image(partition: &Partition) -> ImageMatrix {
    let (w, h) = (partition.width(), partition.height());
    let n = partition.cluster_count();
    let mut data = vec![0.0; w * h];
    for j in 0..w * h {
        let level = if n == 1 {
            0.0
        } else {
            partition.cluster_of(j) as f64 / (n - 1) as f64
        };
        let (row, col) = pixel_position(j, h);
        data[row * w + col] = level;
    }
    ImageMatrix::new(w, h, data).expect("levels are finite by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pixelspace::{devectorize, vectorize};

    /// The running 2x2 example: regions {0, 2, 3} and {1} in
    /// column-major pixel indices.
    fn toy_projection() -> ProjectionMatrix {
        let partition = Partition::new(vec![0, 1, 0, 0], 2, 2, 2).unwrap();
        build_projection(&partition)
    }

    #[test]
    fn dense_matrix_has_inverse_size_weights() {
        let w = toy_projection();
        let third = 1.0 / 3.0;
        assert_eq!(
            w.dense(),
            vec![vec![third, 0.0, third, third], vec![0.0, 1.0, 0.0, 0.0]]
        );
        assert!(w.covers_grid());
    }

    #[test]
    fn projection_takes_region_means() {
        let w = toy_projection();
        let x1 = vectorize(&ImageMatrix::from_rows(&[vec![4.0, 6.0], vec![1.0, 3.0]]).unwrap());
        let f1 = project(&w, &x1).unwrap();
        assert!((f1[0] - 13.0 / 3.0).abs() < 1e-12);
        assert_eq!(f1[1], 1.0);

        let x2 = vectorize(&ImageMatrix::from_rows(&[vec![5.0, 9.0], vec![2.0, 7.0]]).unwrap());
        let f2 = project(&w, &x2).unwrap();
        assert!((f2[0] - 7.0).abs() < 1e-12);
        assert_eq!(f2[1], 2.0);

        let f3 = project(&w, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((f3[0] - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(f3[1], 2.0);
    }

    #[test]
    fn reconstruction_error_is_the_within_region_scatter() {
        let w = toy_projection();
        let x1 = [4.0, 1.0, 6.0, 3.0];
        let back = reconstruct(&w, &project(&w, &x1).unwrap(), 0.0).unwrap();
        let mean_a = 13.0 / 3.0;
        assert_eq!(back, vec![mean_a, 1.0, mean_a, mean_a]);
        assert!((representation_error(&w, &x1, 0.0).unwrap() - 7.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn reconstructed_image_layout_matches_the_source() {
        let w = toy_projection();
        let back = reconstruct(&w, &[10.0, 20.0], 0.0).unwrap();
        let img = devectorize(&back, 2, 2).unwrap();
        // Pixel (1, 0) is column-major index 1, the lone second region.
        assert_eq!(img.get(1, 0), 20.0);
        assert_eq!(img.get(0, 0), 10.0);
        assert_eq!(img.get(0, 1), 10.0);
        assert_eq!(img.get(1, 1), 10.0);
    }

    #[test]
    fn single_region_projection_averages_everything() {
        let partition = Partition::new(vec![0, 0, 0, 0], 1, 2, 2).unwrap();
        let w = build_projection(&partition);
        let f = project(&w, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(f, vec![2.5]);
        // Constant inputs reconstruct exactly.
        assert_eq!(representation_error(&w, &[7.0; 4], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn projection_rejects_wrong_lengths() {
        let w = toy_projection();
        assert!(project(&w, &[1.0, 2.0]).is_err());
        assert!(reconstruct(&w, &[1.0], 0.0).is_err());
    }

    #[test]
    fn region_validation_catches_overlap_gaps_and_range() {
        assert!(ProjectionMatrix::from_regions(vec![vec![0], vec![0]], 2, 1).is_err());
        assert!(ProjectionMatrix::from_regions(vec![vec![0, 5]], 2, 2).is_err());
        assert!(ProjectionMatrix::from_regions(vec![vec![1, 0]], 2, 1).is_err());
        assert!(ProjectionMatrix::from_regions(vec![vec![0], vec![]], 2, 1).is_err());
        assert!(ProjectionMatrix::from_regions(vec![], 2, 1).is_err());
        // Partial cover is allowed, just not total by default.
        let partial = ProjectionMatrix::from_regions(vec![vec![0, 2]], 2, 2).unwrap();
        assert!(!partial.covers_grid());
    }

    #[test]
    fn partial_models_fill_uncovered_pixels() {
        let w = ProjectionMatrix::from_regions(vec![vec![0, 1]], 2, 2).unwrap();
        let back = reconstruct(&w, &[3.0], -1.0).unwrap();
        assert_eq!(back, vec![3.0, 3.0, -1.0, -1.0]);
    }

    #[test]
    fn variance_ranking_keeps_ties_in_index_order() {
        let variances = [1.0, 5.0, 5.0, 0.5];
        let plan = select_top_variance(&variances, 2).unwrap();
        assert_eq!(plan.kept(), &[1, 2]);
        let plan = select_top_variance(&variances, 3).unwrap();
        assert_eq!(plan.kept(), &[0, 1, 2]);
        assert_eq!(plan.apply(&[9.0, 8.0, 7.0, 6.0]).unwrap(), vec![9.0, 8.0, 7.0]);
        assert!(select_top_variance(&variances, 0).is_err());
        assert!(select_top_variance(&variances, 5).is_err());
    }

    #[test]
    fn feature_variances_are_sample_variances() {
        let rows = vec![vec![1.0, 10.0], vec![3.0, 10.0], vec![5.0, 10.0]];
        let v = feature_variances(&rows).unwrap();
        assert!((v[0] - 4.0).abs() < 1e-12);
        assert_eq!(v[1], 0.0);
        assert_eq!(feature_variances(&[vec![2.0, 3.0]]).unwrap(), vec![0.0, 0.0]);
        assert!(feature_variances(&[]).is_err());
    }

    #[test]
    fn selecting_rows_preserves_their_feature_values() {
        let partition = Partition::new(vec![0, 1, 2, 2, 1, 0], 3, 6, 1).unwrap();
        let w = build_projection(&partition);
        let x = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let full = project(&w, &x).unwrap();

        let plan = select_top_variance(&feature_variances(&[full.clone()]).unwrap(), 2)
            .unwrap();
        let reduced = w.select(&plan).unwrap();
        let narrow = project(&reduced, &x).unwrap();
        assert_eq!(narrow, plan.apply(&full).unwrap());
    }

    #[test]
    fn model_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let w = toy_projection();
        save_projection(&w, &path).unwrap();
        let back = load_projection(&path).unwrap();
        assert_eq!(w, back);

        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "2 2 2 4\n3 0 2 3\n1 1\n");
    }

    #[test]
    fn malformed_models_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, body: &str| {
            let path = dir.path().join(name);
            std::fs::write(&path, body).unwrap();
            path
        };
        assert!(load_projection(&write("a", "2 2 1\n")).is_err());
        assert!(load_projection(&write("b", "2 2 1 5\n1 0\n")).is_err());
        assert!(load_projection(&write("c", "2 1 1 2\n2 0\n")).is_err());
        assert!(load_projection(&write("d", "2 1 2 2\n1 0\n")).is_err());
        assert!(load_projection(&write("e", "2 1 1 2\n1 9\n")).is_err());
        assert!(load_projection(&write("f", "2 1 2 2\n1 0\n1 0\n")).is_err());
    }

    #[test]
    fn region_map_spreads_ids_over_gray_levels() {
        let partition = Partition::new(vec![0, 1, 2, 0], 3, 2, 2).unwrap();
        let img = region_map_image(&partition);
        // Column-major ids [0, 1, 2, 0] land row-major as:
        // (0,0)=id0, (1,0)=id1, (0,1)=id2, (1,1)=id0.
        assert_eq!(img.get(0, 0), 0.0);
        assert_eq!(img.get(1, 0), 0.5);
        assert_eq!(img.get(0, 1), 1.0);
        assert_eq!(img.get(1, 1), 0.0);

        let single = Partition::new(vec![0, 0], 1, 2, 1).unwrap();
        assert!(region_map_image(&single).data().iter().all(|&v| v == 0.0));
    }
}
