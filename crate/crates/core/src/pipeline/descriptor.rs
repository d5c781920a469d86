use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{Tensor, TensorArchive};
use crate::resample::FeatureMatrix;

/// Feature rows tagged with where they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub features: FeatureMatrix,
    pub shape_id: String,
    /// Source point of every row.
    pub indices: Vec<usize>,
    pub config_hash: u64,
}

impl Descriptor {
    pub fn new(features: FeatureMatrix, shape_id: impl Into<String>, config_hash: u64) -> Result<Self> {
        let indices = (0..features.rows()).collect();
        Self::with_indices(features, shape_id, indices, config_hash)
    }

    pub fn with_indices(
        features: FeatureMatrix,
        shape_id: impl Into<String>,
        indices: Vec<usize>,
        config_hash: u64,
    ) -> Result<Self> {
        if !features.is_finite() {
            return Err(Error::InvalidParameter("descriptor has non-finite entries".into()));
        }
        if indices.len() != features.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} indices for {} rows",
                indices.len(),
                features.rows()
            )));
        }
        Ok(Self { features, shape_id: shape_id.into(), indices, config_hash })
    }

    pub fn to_archive(&self) -> Result<TensorArchive> {
        let mut a = TensorArchive::new();
        a.set_meta("shape_id", &self.shape_id)?;
        a.set_meta("config_hash", format!("{:016x}", self.config_hash))?;
        a.insert_matrix("features", &self.features)?;
        let idx: Vec<f64> = self.indices.iter().map(|&i| i as f64).collect();
        a.insert("indices", Tensor::from_f64(vec![idx.len() as u64], &idx)?)?;
        Ok(a)
    }

    pub fn from_archive(a: &TensorArchive) -> Result<Self> {
        let features = a.matrix("features")?;
        let indices = a
            .require("indices")?
            .data()
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::Archive(format!("invalid point index {v}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let hash = a.require_meta("config_hash")?;
        let config_hash =
            u64::from_str_radix(hash, 16).map_err(|_| Error::Archive(format!("bad config hash `{hash}`")))?;
        Self::with_indices(features, a.require_meta("shape_id")?, indices, config_hash)
            .map_err(|e| Error::Archive(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// Row of `db` nearest to each row of `da`.
    pub map: Vec<usize>,
    pub distances: Vec<f64>,
    /// Fraction of matches whose part labels agree, when labels were given.
    pub accuracy: Option<f64>,
}

impl Matching {
    /// Fraction of rows matched to the row with the same source point.
    pub fn identity_rate(&self, da: &Descriptor, db: &Descriptor) -> f64 {
        let hits = self.map.iter().enumerate().filter(|&(r, &m)| da.indices[r] == db.indices[m]).count();
        hits as f64 / self.map.len().max(1) as f64
    }
}

/// Nearest-neighbor retrieval of every row of `da` among the rows of `db`
/// (Euclidean, lower row on ties). `labels` are per source point.
pub fn match_descriptors(
    da: &Descriptor,
    db: &Descriptor,
    labels: Option<(&[usize], &[usize])>,
) -> Result<Matching> {
    let (fa, fb) = (&da.features, &db.features);
    if fa.cols() != fb.cols() {
        return Err(Error::DimensionMismatch(format!(
            "descriptors have {} and {} channels",
            fa.cols(),
            fb.cols()
        )));
    }
    if fb.rows() == 0 {
        return Err(Error::InvalidParameter("cannot match against an empty descriptor".into()));
    }
    let (map, distances): (Vec<usize>, Vec<f64>) = (0..fa.rows())
        .into_par_iter()
        .map(|r| {
            let q = fa.row(r);
            let mut best = (f64::INFINITY, 0);
            for s in 0..fb.rows() {
                let d: f64 = q.iter().zip(fb.row(s)).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, s);
                }
            }
            (best.1, best.0.sqrt())
        })
        .unzip();
    let accuracy = match labels {
        None => None,
        Some((la, lb)) => {
            let label = |l: &[usize], i: usize| {
                l.get(i).copied().ok_or_else(|| {
                    Error::DimensionMismatch(format!("no label for point {i} ({} labels)", l.len()))
                })
            };
            let mut agree = 0usize;
            for (r, &m) in map.iter().enumerate() {
                if label(la, da.indices[r])? == label(lb, db.indices[m])? {
                    agree += 1;
                }
            }
            Some(agree as f64 / map.len().max(1) as f64)
        }
    };
    Ok(Matching { map, distances, accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc(rows: &[Vec<f64>]) -> Descriptor {
        Descriptor::new(FeatureMatrix::from_rows(rows).unwrap(), "s", 7).unwrap()
    }

    #[test]
    fn self_match_is_identity() {
        let d = desc(&[vec![0.0, 1.0], vec![2.0, 0.5], vec![-1.0, 3.0]]);
        let m = match_descriptors(&d, &d, Some((&[0, 1, 1], &[0, 1, 1]))).unwrap();
        assert_eq!(m.map, vec![0, 1, 2]);
        assert_eq!(m.accuracy, Some(1.0));
        assert_eq!(m.identity_rate(&d, &d), 1.0);
    }

    #[test]
    fn permutation_is_recovered() {
        let rows = vec![vec![0.0, 1.0], vec![2.0, 0.5], vec![-1.0, 3.0], vec![4.0, 4.0]];
        let perm = [2, 0, 3, 1];
        let da = desc(&rows);
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&p| rows[p].clone()).collect();
        let db =
            Descriptor::with_indices(FeatureMatrix::from_rows(&shuffled).unwrap(), "s", perm.to_vec(), 7)
                .unwrap();
        let m = match_descriptors(&da, &db, None).unwrap();
        for (r, &s) in m.map.iter().enumerate() {
            assert_eq!(perm[s], r);
        }
        assert_eq!(m.identity_rate(&da, &db), 1.0);
    }

    #[test]
    fn channel_mismatch_and_non_finite() {
        let a = desc(&[vec![0.0, 1.0]]);
        let b = desc(&[vec![0.0, 1.0, 2.0]]);
        assert!(matches!(match_descriptors(&a, &b, None), Err(Error::DimensionMismatch(_))));
        assert!(Descriptor::new(FeatureMatrix::from_rows(&[vec![f64::NAN]]).unwrap(), "x", 0).is_err());
    }

    #[test]
    fn archive_round_trip() {
        let d = Descriptor::with_indices(
            FeatureMatrix::from_rows(&[vec![0.5, 1.0], vec![0.25, -2.0]]).unwrap(),
            "cube_0",
            vec![4, 9],
            0xdead_beef_0000_0001,
        )
        .unwrap();
        let back = Descriptor::from_archive(
            &TensorArchive::from_bytes(&d.to_archive().unwrap().to_bytes()).unwrap(),
        )
        .unwrap();
        assert_eq!(back, d);
    }
}
