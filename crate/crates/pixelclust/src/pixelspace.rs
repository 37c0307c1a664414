//! Conversions between images and the two vector views used throughout:
//! sample-vectors (one per image) and pixel-vectors (one per pixel
//! position).
//!
//! Images are vectorized column-by-column: the pixel at row `r`, column
//! `c` of an `h`-row image lands at index `c * h + r`. Every consumer of
//! sample-vectors in this crate (clustering, projection, the baseline)
//! assumes this ordering, as do the partition and model files, so it is
//! part of the on-disk contract.

use crate::dataset::ImageMatrix;
use crate::error::{Error, Result};

/// One image flattened to a column vector of length `w * h`.
pub type SampleVector = Vec<f64>;

/// A set of pixel-vectors: `vectors[j]` describes pixel position `j`
/// (column-major), all with equal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelVectorSet {
    vectors: Vec<Vec<f64>>,
    dim: usize,
    width: usize,
    height: usize,
}

impl PixelVectorSet {
    fn new(vectors: Vec<Vec<f64>>, dim: usize, width: usize, height: usize) -> Self {
        debug_assert!(vectors.iter().all(|v| v.len() == dim));
        Self {
            vectors,
            dim,
            width,
            height,
        }
    }

    /// Wraps externally built descriptors: one vector per pixel of a
    /// `width x height` grid in column-major order, all the same length.
    pub fn from_vectors(vectors: Vec<Vec<f64>>, width: usize, height: usize) -> Result<Self> {
        if vectors.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: vectors.len(),
            });
        }
        let dim = vectors.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "pixel-vectors must have at least one coordinate".to_string(),
            ));
        }
        for v in &vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "non-finite pixel-vector coordinate {bad}"
                )));
            }
        }
        Ok(Self::new(vectors, dim, width, height))
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Dimension of each pixel-vector.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// Flattens an image column-major.
pub fn vectorize(img: &ImageMatrix) -> SampleVector {
    let (w, h) = (img.width(), img.height());
    let mut v = Vec::with_capacity(w * h);
    for col in 0..w {
        for row in 0..h {
            v.push(img.get(row, col));
        }
    }
    v
}

/// Inverse of [`vectorize`] for the given dimensions.
pub fn devectorize(v: &[f64], width: usize, height: usize) -> Result<ImageMatrix> {
    if v.len() != width * height {
        return Err(Error::DimensionMismatch {
            expected: width * height,
            found: v.len(),
        });
    }
    let mut data = vec![0.0; width * height];
    for col in 0..width {
        for row in 0..height {
            data[row * width + col] = v[col * height + row];
        }
    }
    ImageMatrix::new(width, height, data)
}

/// Row/column of a column-major pixel index.
pub fn pixel_position(index: usize, height: usize) -> (usize, usize) {
    (index % height, index / height)
}

/// Builds the by-value pixel-vectors of a training set: pixel position
/// `j` is described by its intensity in each of the `m` images, in
/// sample order. Requires at least one image; all must share dimensions.
pub fn pixel_vectors_by_value(samples: &[ImageMatrix]) -> Result<PixelVectorSet> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("no training images".to_string()))?;
    let (w, h) = (first.width(), first.height());
    if samples.iter().any(|s| s.width() != w || s.height() != h) {
        return Err(Error::InvalidArgument(
            "training images do not share dimensions".to_string(),
        ));
    }

    let flattened: Vec<SampleVector> = samples.iter().map(vectorize).collect();
    let n = w * h;
    let m = samples.len();
    let mut vectors = Vec::with_capacity(n);
    for j in 0..n {
        let mut pv = Vec::with_capacity(m);
        for sample in &flattened {
            pv.push(sample[j]);
        }
        vectors.push(pv);
    }
    Ok(PixelVectorSet::new(vectors, m, w, h))
}

/// Builds the by-position pixel-vectors of a `w x h` grid: pixel position
/// `j` is described by its own coordinates `(x, y)` = (column, row).
/// Intensities never enter, so clustering these recovers purely spatial
/// regions.
pub fn pixel_vectors_by_position(width: usize, height: usize) -> Result<PixelVectorSet> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid must be at least 1x1, got {width}x{height}"
        )));
    }
    let mut vectors = Vec::with_capacity(width * height);
    for col in 0..width {
        for row in 0..height {
            vectors.push(vec![col as f64, row as f64]);
        }
    }
    Ok(PixelVectorSet::new(vectors, 2, width, height))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(rows: &[Vec<f64>]) -> ImageMatrix {
        ImageMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn vectorize_walks_columns_first() {
        let img = image(&[vec![4.0, 6.0], vec![1.0, 3.0]]);
        assert_eq!(vectorize(&img), vec![4.0, 1.0, 6.0, 3.0]);

        let img = image(&[vec![5.0, 9.0], vec![2.0, 7.0]]);
        assert_eq!(vectorize(&img), vec![5.0, 2.0, 9.0, 7.0]);
    }

    #[test]
    fn vectorize_non_square() {
        // 2 rows x 3 cols: columns are (1,4), (2,5), (3,6).
        let img = image(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        assert_eq!(vectorize(&img), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn devectorize_inverts_vectorize() {
        let img = image(&[vec![0.1, 0.2, 0.3], vec![0.4, 0.5, 0.6]]);
        let v = vectorize(&img);
        let back = devectorize(&v, img.width(), img.height()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn devectorize_rejects_wrong_length() {
        assert!(devectorize(&[1.0, 2.0, 3.0], 2, 2).is_err());
    }

    #[test]
    fn pixel_position_inverts_the_index() {
        let (w, h) = (3, 2);
        for col in 0..w {
            for row in 0..h {
                assert_eq!(pixel_position(col * h + row, h), (row, col));
            }
        }
    }

    #[test]
    fn by_value_vectors_collect_intensities_across_samples() {
        let x1 = image(&[vec![4.0, 6.0], vec![1.0, 3.0]]);
        let x2 = image(&[vec![5.0, 9.0], vec![2.0, 7.0]]);
        let set = pixel_vectors_by_value(&[x1, x2]).unwrap();
        assert_eq!(set.len(), 4);
        assert_eq!(set.dim(), 2);
        // Position 0 is (row 0, col 0): intensities 4 then 5; position 1
        // is (row 1, col 0): 1 then 2; and so on down the columns.
        assert_eq!(set.vectors()[0], vec![4.0, 5.0]);
        assert_eq!(set.vectors()[1], vec![1.0, 2.0]);
        assert_eq!(set.vectors()[2], vec![6.0, 9.0]);
        assert_eq!(set.vectors()[3], vec![3.0, 7.0]);
    }

    #[test]
    fn by_value_single_image() {
        let x = image(&[vec![0.5, 0.25]]);
        let set = pixel_vectors_by_value(&[x]).unwrap();
        assert_eq!(set.dim(), 1);
        assert_eq!(set.vectors(), &[vec![0.5], vec![0.25]]);
    }

    #[test]
    fn by_value_rejects_empty_and_mismatched() {
        assert!(pixel_vectors_by_value(&[]).is_err());
        let a = image(&[vec![0.0, 0.0]]);
        let b = image(&[vec![0.0], vec![0.0]]);
        assert!(pixel_vectors_by_value(&[a, b]).is_err());
    }

    #[test]
    fn by_position_vectors_are_coordinates() {
        let set = pixel_vectors_by_position(2, 2).unwrap();
        // Column-major order over a 2x2 grid: (0,0), (0,1), (1,0), (1,1)
        // as (x, y) pairs.
        assert_eq!(
            set.vectors(),
            &[
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
            ]
        );
        assert_eq!(set.dim(), 2);
    }

    #[test]
    fn by_position_rejects_zero_dims() {
        assert!(pixel_vectors_by_position(0, 2).is_err());
        assert!(pixel_vectors_by_position(2, 0).is_err());
    }
}
