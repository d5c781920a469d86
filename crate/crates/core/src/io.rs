//! Cloud text files, the binary tensor archive, and CSV grid dumps.
//!
//! Archive layout, all little-endian:
//!
//! ```text
//! "RTLH" | u32 version | u32 count
//! count × ( u32 name_len | name (UTF-8) | u8 rank | rank × u64 dim | f32 payload )
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::resample::FeatureMatrix;
use crate::voxelizer::SphericalGrid;

pub const ARCHIVE_MAGIC: [u8; 4] = *b"RTLH";
pub const ARCHIVE_VERSION: u32 = 1;
const META_PREFIX: &str = "meta/";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cloud {
    pub points: Vec<Vec3>,
    pub labels: Option<Vec<usize>>,
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<Cloud> {
    let path = path.as_ref();
    parse_cloud(&fs::read_to_string(path)?, path)
}

/// Parses `x y z [label]` lines; `#` starts a comment.
pub fn parse_cloud(text: &str, path: &Path) -> Result<Cloud> {
    let err = |line: usize, msg: String| Error::Parse { path: PathBuf::from(path), line, msg };
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut arity = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(err(n + 1, format!("expected 3 or 4 fields, found {}", fields.len())));
        }
        match arity {
            None => arity = Some(fields.len()),
            Some(a) if a != fields.len() => {
                return Err(err(
                    n + 1,
                    format!("line has {} fields but earlier lines have {a}", fields.len()),
                ))
            }
            _ => {}
        }
        let mut xyz = [0.0; 3];
        for (slot, f) in xyz.iter_mut().zip(&fields) {
            *slot = f.parse::<f64>().map_err(|_| err(n + 1, format!("`{f}` is not a number")))?;
            if !slot.is_finite() {
                return Err(err(n + 1, format!("`{f}` is not finite")));
            }
        }
        points.push(Vec3::from_array(xyz));
        if let Some(l) = fields.get(3) {
            labels.push(l.parse::<usize>().map_err(|_| err(n + 1, format!("`{l}` is not a label")))?);
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let labels = (arity == Some(4)).then_some(labels);
    Ok(Cloud { points, labels })
}

/// One point per line with nine significant digits.
pub fn format_cloud(points: &[Vec3], labels: Option<&[usize]>) -> Result<String> {
    if let Some(l) = labels {
        if l.len() != points.len() {
            return Err(Error::DimensionMismatch(format!("{} labels for {} points", l.len(), points.len())));
        }
    }
    let mut out = String::with_capacity(points.len() * 48);
    for (i, p) in points.iter().enumerate() {
        let _ = write!(out, "{:.8e} {:.8e} {:.8e}", p.x, p.y, p.z);
        if let Some(l) = labels {
            let _ = write!(out, " {}", l[i]);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_cloud(path: impl AsRef<Path>, points: &[Vec3], labels: Option<&[usize]>) -> Result<()> {
    fs::write(path, format_cloud(points, labels)?)?;
    Ok(())
}

/// Reads a label file: either one integer per line, or a cloud file whose
/// fourth column holds the labels.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let single = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .all(|l| l.split_whitespace().count() == 1);
    if !single {
        return parse_cloud(&text, path)?.labels.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "cloud file carries no label column".into(),
        });
    }
    let mut labels = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        labels.push(line.parse::<usize>().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg: format!("`{line}` is not a label"),
        })?);
    }
    if labels.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tensor {
    dims: Vec<u64>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<u64>, data: Vec<f32>) -> Result<Self> {
        let expected =
            element_count(&dims).ok_or_else(|| Error::Archive(format!("dims {dims:?} overflow")))?;
        if expected != data.len() as u64 {
            return Err(Error::DimensionMismatch(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        if dims.len() > u8::MAX as usize {
            return Err(Error::Archive(format!("rank {} exceeds 255", dims.len())));
        }
        Ok(Self { dims, data })
    }

    /// Rounds `f64` values to `f32`.
    pub fn from_f64(dims: Vec<u64>, data: &[f64]) -> Result<Self> {
        Self::new(dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn dims(&self) -> &[u64] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

fn element_count(dims: &[u64]) -> Option<u64> {
    dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d))
}

/// Ordered collection of uniquely named tensors.
///
/// Metadata travels as empty tensors named `meta/<key>=<value>`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorArchive {
    entries: Vec<(String, Tensor)>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::Archive(format!("duplicate tensor name `{name}`")));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Like [`get`](Self::get) but missing tensors are an error.
    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| Error::Archive(format!("missing tensor `{name}`")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn set_meta(&mut self, key: &str, value: impl std::fmt::Display) -> Result<()> {
        let prefix = format!("{META_PREFIX}{key}=");
        self.entries.retain(|(n, _)| !n.starts_with(&prefix));
        self.insert(format!("{prefix}{value}"), Tensor { dims: vec![0], data: Vec::new() })
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        let prefix = format!("{META_PREFIX}{key}=");
        self.entries.iter().find_map(|(n, _)| n.strip_prefix(&prefix))
    }

    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta(key).ok_or_else(|| Error::Archive(format!("missing metadata `{key}`")))
    }

    pub fn insert_matrix(&mut self, name: impl Into<String>, m: &FeatureMatrix) -> Result<()> {
        self.insert(name, Tensor::from_f64(vec![m.rows() as u64, m.cols() as u64], m.data())?)
    }

    pub fn matrix(&self, name: &str) -> Result<FeatureMatrix> {
        let t = self.require(name)?;
        match t.dims() {
            &[r, c] => FeatureMatrix::from_data(r as usize, c as usize, t.to_f64()),
            d => Err(Error::Archive(format!("tensor `{name}` has rank {}, expected 2", d.len()))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&ARCHIVE_MAGIC);
        out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dims.len() as u8);
            for d in &t.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != ARCHIVE_MAGIC {
            return Err(Error::Archive("bad magic, not a tensor archive".into()));
        }
        let version = r.u32("version")?;
        if version != ARCHIVE_VERSION {
            return Err(Error::Archive(format!("unsupported archive version {version}")));
        }
        let count = r.u32("tensor count")?;
        let mut archive = TensorArchive::new();
        for _ in 0..count {
            let len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| Error::Archive("tensor name is not UTF-8".into()))?
                .to_owned();
            let rank = r.take(1, "rank")?[0] as usize;
            let dims = (0..rank).map(|_| r.u64("dims")).collect::<Result<Vec<_>>>()?;
            let n = element_count(&dims)
                .and_then(|n| usize::try_from(n).ok())
                .filter(|n| n.checked_mul(4).is_some())
                .ok_or_else(|| Error::Archive(format!("tensor `{name}` is too large")))?;
            let payload = r.take(n * 4, "payload")?;
            let data =
                payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            archive.insert(name, Tensor { dims, data })?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Archive(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(archive)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Archive(format!(
                "truncated archive while reading {what} at byte {}",
                self.pos
            )));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<TensorArchive> {
    TensorArchive::from_bytes(&fs::read(path)?)
}

pub fn write_archive(path: impl AsRef<Path>, archive: &TensorArchive) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&archive.to_bytes())?;
    Ok(())
}

/// `i,j,k,alpha,beta,h,c0..` rows for plotting.
pub fn grid_to_csv(grid: &SphericalGrid) -> String {
    let n = grid.size();
    let mut out = String::from("i,j,k,alpha,beta,h");
    for c in 0..grid.channels() {
        let _ = write!(out, ",c{c}");
    }
    out.push('\n');
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let _ =
                    write!(out, "{i},{j},{k},{:.8e},{:.8e},{:.8e}", grid.alpha(i), grid.beta(j), grid.h(k));
                for v in grid.cell(i, j, k) {
                    let _ = write!(out, ",{v:.8e}");
                }
                out.push('\n');
            }
        }
    }
    out
}

pub fn grid_to_tensor(grid: &SphericalGrid) -> Result<Tensor> {
    let n = grid.size() as u64;
    Tensor::from_f64(vec![n, n, n, grid.channels() as u64], grid.data())
}

pub fn grid_from_tensor(t: &Tensor) -> Result<SphericalGrid> {
    match t.dims() {
        &[a, b, c, ch] if a == b && b == c && a % 2 == 0 && a > 0 => {
            SphericalGrid::from_data(a as usize / 2, ch as usize, t.to_f64())
        }
        d => Err(Error::Archive(format!("dims {d:?} do not describe a voxel grid"))),
    }
}
