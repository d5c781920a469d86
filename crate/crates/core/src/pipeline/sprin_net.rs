use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{get_mlp, put_mlp};
use crate::error::{Error, Result};
use crate::geometry::{centroid, Vec3};
use crate::io::TensorArchive;
use crate::resample::FeatureMatrix;
use crate::sprin::{
    correlate_at, fps_from_centroid, Aggregation, Dense, Mlp, MlpFilter, RelativeInvariant, SprinLayerCfg,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockOp {
    /// Correlation at every point of the current level.
    Local,
    /// Farthest point sampling to `m` centers, then correlation there.
    Sample(usize),
    /// Back up to the previous (denser) level.
    Propagate,
}

/// One sparse correlation layer of the stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SprinBlock {
    pub op: BlockOp,
    pub k: usize,
    pub d: usize,
    pub out: usize,
}

impl SprinBlock {
    pub const fn local(k: usize, d: usize, out: usize) -> Self {
        Self { op: BlockOp::Local, k, d, out }
    }

    pub const fn sample(m: usize, k: usize, d: usize, out: usize) -> Self {
        Self { op: BlockOp::Sample(m), k, d, out }
    }

    pub const fn propagate(k: usize, d: usize, out: usize) -> Self {
        Self { op: BlockOp::Propagate, k, d, out }
    }
}

/// `L<k>/<d>x<out>`, `S<m>:<k>/<d>x<out>` or `P<k>/<d>x<out>`.
impl fmt::Display for SprinBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.op {
            BlockOp::Local => write!(f, "L{}/{}x{}", self.k, self.d, self.out),
            BlockOp::Sample(m) => write!(f, "S{m}:{}/{}x{}", self.k, self.d, self.out),
            BlockOp::Propagate => write!(f, "P{}/{}x{}", self.k, self.d, self.out),
        }
    }
}

impl FromStr for SprinBlock {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse layer `{s}`"));
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        let (tag, rest) = s.split_at_checked(1).ok_or_else(bad)?;
        let (op, rest) = match tag {
            "L" => (BlockOp::Local, rest),
            "P" => (BlockOp::Propagate, rest),
            "S" => {
                let (m, rest) = rest.split_once(':').ok_or_else(bad)?;
                (BlockOp::Sample(num(m)?), rest)
            }
            _ => return Err(bad()),
        };
        let (k, rest) = rest.split_once('/').ok_or_else(bad)?;
        let (d, out) = rest.split_once('x').ok_or_else(bad)?;
        Ok(Self { op, k: num(k)?, d: num(d)?, out: num(out)? })
    }
}

pub(crate) fn format_blocks(blocks: &[SprinBlock]) -> String {
    blocks.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

pub(crate) fn parse_blocks(s: &str) -> Result<Vec<SprinBlock>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(str::parse).collect()
}

/// Sparse pipeline layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SprinConfig {
    pub encoder: Vec<SprinBlock>,
    /// Empty when only the global feature is wanted.
    pub decoder: Vec<SprinBlock>,
    /// Hidden widths inside every filter MLP.
    pub filter_hidden: Vec<usize>,
    /// Frozen per-point layers after the decoder.
    pub point_fc: Vec<usize>,
    /// Frozen layers after max/avg pooling.
    pub global_fc: Vec<usize>,
    pub aggregation: Aggregation,
}

impl Default for SprinConfig {
    fn default() -> Self {
        Self::with_width(64)
    }
}

impl SprinConfig {
    /// Default stack with `width` channels per correlation layer.
    pub fn with_width(width: usize) -> Self {
        let w = width;
        Self {
            encoder: vec![
                SprinBlock::local(64, 2, w),
                SprinBlock::local(64, 2, w),
                SprinBlock::sample(128, 72, 3, w),
                SprinBlock::local(32, 1, w),
                SprinBlock::local(32, 1, w),
                SprinBlock::sample(32, 32, 1, w),
                SprinBlock::local(32, 1, w),
                SprinBlock::local(32, 1, w),
            ],
            decoder: vec![
                SprinBlock::propagate(16, 1, w),
                SprinBlock::local(32, 1, w),
                SprinBlock::propagate(32, 1, w),
                SprinBlock::local(48, 2, w),
                SprinBlock::local(96, 3, w),
            ],
            filter_hidden: vec![w],
            point_fc: vec![128, 256],
            global_fc: vec![256, 64],
            aggregation: Aggregation::Mean,
        }
    }

    /// Same layout with every dilation set to 1.
    pub fn unit_dilation(mut self) -> Self {
        self.encoder.iter_mut().chain(self.decoder.iter_mut()).for_each(|b| b.d = 1);
        self
    }

    pub fn encoder_only(mut self) -> Self {
        self.decoder.clear();
        self
    }

    pub fn is_unit_dilation(&self) -> bool {
        self.encoder.iter().chain(&self.decoder).all(|b| b.d == 1)
    }

    /// Smallest cloud the stack accepts.
    pub fn min_points(&self) -> usize {
        let mut need = 1;
        let mut depth = 0usize;
        for b in &self.encoder {
            if depth == 0 {
                need = need.max(b.k);
            }
            if let BlockOp::Sample(m) = b.op {
                if depth == 0 {
                    need = need.max(m);
                }
                depth += 1;
            }
        }
        for b in &self.decoder {
            match b.op {
                BlockOp::Propagate => depth = depth.saturating_sub(1),
                _ if depth == 0 => need = need.max(b.k),
                _ => {}
            }
        }
        need
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder.is_empty() {
            return Err(Error::InvalidParameter("the encoder needs at least one layer".into()));
        }
        // known level sizes; the input level is unknown here
        let mut levels: Vec<Option<usize>> = vec![None];
        let fits = |b: &SprinBlock, src: Option<usize>| match src {
            Some(n) if b.k > n => {
                Err(Error::InvalidParameter(format!("layer {b} needs {} neighbors of {n}", b.k)))
            }
            _ => Ok(()),
        };
        for b in &self.encoder {
            check_block(b)?;
            let src = *levels.last().expect("input level");
            fits(b, src)?;
            match b.op {
                BlockOp::Local => {}
                BlockOp::Sample(m) => {
                    if src.is_some_and(|n| m > n) || m == 0 {
                        return Err(Error::InvalidParameter(format!(
                            "cannot sample {m} centers at layer {b}"
                        )));
                    }
                    levels.push(Some(m));
                }
                BlockOp::Propagate => {
                    return Err(Error::InvalidParameter("propagation layers belong to the decoder".into()))
                }
            }
        }
        for b in &self.decoder {
            check_block(b)?;
            fits(b, *levels.last().expect("input level"))?;
            match b.op {
                BlockOp::Sample(_) => {
                    return Err(Error::InvalidParameter("sampling layers belong to the encoder".into()))
                }
                BlockOp::Propagate => {
                    if levels.len() == 1 {
                        return Err(Error::InvalidParameter("propagation past the input level".into()));
                    }
                    levels.pop();
                }
                BlockOp::Local => {}
            }
        }
        if !self.decoder.is_empty() && levels.len() != 1 {
            return Err(Error::InvalidParameter("the decoder must end at the input level".into()));
        }
        if self.filter_hidden.contains(&0) || self.point_fc.contains(&0) || self.global_fc.contains(&0) {
            return Err(Error::InvalidParameter("layer widths must be at least 1".into()));
        }
        Ok(())
    }

    fn layer_cfg(&self, b: &SprinBlock) -> SprinLayerCfg {
        SprinLayerCfg { aggregation: self.aggregation, ..SprinLayerCfg::new(b.k, b.d) }
    }

    /// `(c_in, c_out)` of every filter, encoder first.
    fn filter_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut c = 0;
        for b in self.encoder.iter().chain(&self.decoder) {
            shapes.push((c, b.out));
            c = b.out;
        }
        shapes
    }

    fn encoder_width(&self) -> usize {
        self.encoder.last().map_or(0, |b| b.out)
    }

    fn point_widths(&self) -> Vec<usize> {
        let start = self.decoder.last().map_or(0, |b| b.out);
        std::iter::once(start).chain(self.point_fc.iter().copied()).collect()
    }

    fn global_widths(&self) -> Vec<usize> {
        std::iter::once(2 * self.encoder_width()).chain(self.global_fc.iter().copied()).collect()
    }

    pub fn global_dim(&self) -> usize {
        *self.global_widths().last().expect("non-empty")
    }
}

fn check_block(b: &SprinBlock) -> Result<()> {
    if b.k == 0 || b.d == 0 || b.d > b.k || b.out == 0 {
        return Err(Error::InvalidParameter(format!(
            "invalid layer {b}: need k >= d >= 1 and a positive width"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SprinWeights {
    pub encoder: Vec<MlpFilter>,
    pub decoder: Vec<MlpFilter>,
    pub point_fc: Option<Mlp>,
    pub global_fc: Option<Mlp>,
}

impl SprinWeights {
    pub fn random<R: Rng + ?Sized>(cfg: &SprinConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut filters = Vec::new();
        for (c_in, c_out) in cfg.filter_shapes() {
            filters.push(MlpFilter::random(c_in, &cfg.filter_hidden, c_out, rng)?);
        }
        let decoder = filters.split_off(cfg.encoder.len());
        let point_fc = optional_mlp(&cfg.point_widths(), !cfg.decoder.is_empty(), rng)?;
        let global_fc = optional_mlp(&cfg.global_widths(), true, rng)?;
        Ok(Self { encoder: filters, decoder, point_fc, global_fc })
    }

    pub fn check(&self, cfg: &SprinConfig) -> Result<()> {
        cfg.validate()?;
        let shapes = cfg.filter_shapes();
        let filters: Vec<&MlpFilter> = self.encoder.iter().chain(&self.decoder).collect();
        if self.encoder.len() != cfg.encoder.len() || self.decoder.len() != cfg.decoder.len() {
            return Err(Error::DimensionMismatch("layer count does not match the configuration".into()));
        }
        for (l, (f, (c_in, c_out))) in filters.iter().zip(shapes).enumerate() {
            if f.c_in() != c_in || f.c_out() != c_out {
                return Err(Error::DimensionMismatch(format!(
                    "filter {l} maps {}->{}, expected {c_in}->{c_out}",
                    f.c_in(),
                    f.c_out()
                )));
            }
        }
        if !cfg.decoder.is_empty() {
            check_widths("point", &self.point_fc, &cfg.point_widths())?;
        }
        check_widths("global", &self.global_fc, &cfg.global_widths())
    }

    pub(crate) fn write(&self, a: &mut TensorArchive) -> Result<()> {
        for (l, f) in self.encoder.iter().enumerate() {
            put_mlp(a, &format!("sprin/enc{l}"), f.mlp())?;
        }
        for (l, f) in self.decoder.iter().enumerate() {
            put_mlp(a, &format!("sprin/dec{l}"), f.mlp())?;
        }
        if let Some(m) = &self.point_fc {
            put_mlp(a, "sprin/point_fc", m)?;
        }
        if let Some(m) = &self.global_fc {
            put_mlp(a, "sprin/global_fc", m)?;
        }
        Ok(())
    }

    pub(crate) fn read(a: &TensorArchive, cfg: &SprinConfig) -> Result<Self> {
        cfg.validate()?;
        let mut filters = Vec::new();
        for (l, (c_in, c_out)) in cfg.filter_shapes().into_iter().enumerate() {
            let (prefix, idx) =
                if l < cfg.encoder.len() { ("enc", l) } else { ("dec", l - cfg.encoder.len()) };
            let mut widths = vec![RelativeInvariant::LEN + c_in];
            widths.extend_from_slice(&cfg.filter_hidden);
            widths.push(c_out);
            filters.push(MlpFilter::new(get_mlp(a, &format!("sprin/{prefix}{idx}"), &widths)?)?);
        }
        let decoder = filters.split_off(cfg.encoder.len());
        let point_widths = cfg.point_widths();
        let point_fc = if !cfg.decoder.is_empty() && point_widths.len() > 1 {
            Some(get_mlp(a, "sprin/point_fc", &point_widths)?)
        } else {
            None
        };
        let global_widths = cfg.global_widths();
        let global_fc =
            if global_widths.len() > 1 { Some(get_mlp(a, "sprin/global_fc", &global_widths)?) } else { None };
        let w = Self { encoder: filters, decoder, point_fc, global_fc };
        w.check(cfg)?;
        Ok(w)
    }
}

fn optional_mlp<R: Rng + ?Sized>(widths: &[usize], enabled: bool, rng: &mut R) -> Result<Option<Mlp>> {
    if enabled && widths.len() > 1 {
        Mlp::random(widths, rng).map(Some)
    } else {
        Ok(None)
    }
}

fn check_widths(name: &str, m: &Option<Mlp>, expected: &[usize]) -> Result<()> {
    let got = m.as_ref().map(Mlp::widths).unwrap_or_else(|| vec![expected[0]]);
    if got != expected {
        return Err(Error::DimensionMismatch(format!("{name} head widths {got:?}, expected {expected:?}")));
    }
    Ok(())
}

struct Level {
    points: Vec<Vec3>,
}

/// Encoder pass; returns the coarsest level, its features, and the stack of
/// denser levels.
fn encode(
    points: &[Vec3],
    weights: &SprinWeights,
    cfg: &SprinConfig,
    c: Vec3,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Vec3>, FeatureMatrix, Vec<Level>)> {
    let mut stack = Vec::new();
    let mut cur = points.to_vec();
    let mut feats: Option<FeatureMatrix> = None;
    for (block, filter) in cfg.encoder.iter().zip(&weights.encoder) {
        let layer = cfg.layer_cfg(block);
        let seed = rng.random::<u64>();
        let out = match block.op {
            BlockOp::Sample(m) => {
                let sampled = fps_from_centroid(&cur, c, m)?;
                let out = correlate_at(&sampled, &cur, feats.as_ref(), c, filter, &layer, seed)?;
                stack.push(Level { points: std::mem::replace(&mut cur, sampled) });
                out
            }
            _ => correlate_at(&cur, &cur, feats.as_ref(), c, filter, &layer, seed)?,
        };
        feats = Some(out);
    }
    Ok((cur, feats.expect("validated non-empty encoder"), stack))
}

fn pool(feats: &FeatureMatrix) -> Vec<f64> {
    let c = feats.cols();
    let mut max = vec![f64::NEG_INFINITY; c];
    let mut avg = vec![0.0; c];
    for r in 0..feats.rows() {
        for (ch, v) in feats.row(r).iter().enumerate() {
            max[ch] = max[ch].max(*v);
            avg[ch] += v;
        }
    }
    let inv = 1.0 / feats.rows().max(1) as f64;
    avg.iter_mut().for_each(|v| *v *= inv);
    max.extend(avg);
    max
}

fn check_cloud(points: &[Vec3], weights: &SprinWeights, cfg: &SprinConfig) -> Result<()> {
    weights.check(cfg)?;
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let need = cfg.min_points();
    if points.len() < need {
        return Err(Error::NotEnoughPoints { requested: need, available: points.len() });
    }
    Ok(())
}

fn global_from(feats: &FeatureMatrix, weights: &SprinWeights) -> Vec<f64> {
    let pooled = pool(feats);
    match &weights.global_fc {
        Some(m) => m.forward(&pooled),
        None => pooled,
    }
}

/// Global feature only; skips the decoder.
pub fn sprin_global(
    points: &[Vec3],
    weights: &SprinWeights,
    cfg: &SprinConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    check_cloud(points, weights, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, feats, _) = encode(points, weights, cfg, centroid(points), &mut rng)?;
    Ok(global_from(&feats, weights))
}

/// Per-point features (decoder, then the per-point layers) and the global
/// feature (max and mean pooling over the coarsest level, then the global
/// layers).
pub fn sprin_forward(
    points: &[Vec3],
    weights: &SprinWeights,
    cfg: &SprinConfig,
    seed: u64,
) -> Result<(FeatureMatrix, Vec<f64>)> {
    check_cloud(points, weights, cfg)?;
    if cfg.decoder.is_empty() {
        return Err(Error::InvalidParameter("per-point features need a decoder".into()));
    }
    let c = centroid(points);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut cur, mut feats, mut stack) = encode(points, weights, cfg, c, &mut rng)?;
    let global = global_from(&feats, weights);
    for (block, filter) in cfg.decoder.iter().zip(&weights.decoder) {
        let layer = cfg.layer_cfg(block);
        let seed = rng.random::<u64>();
        feats = match block.op {
            BlockOp::Propagate => {
                let up = stack.pop().expect("validated depth").points;
                let out = correlate_at(&up, &cur, Some(&feats), c, filter, &layer, seed)?;
                cur = up;
                out
            }
            _ => correlate_at(&cur, &cur, Some(&feats), c, filter, &layer, seed)?,
        };
    }
    let per_point = match &weights.point_fc {
        Some(m) => {
            let rows: Vec<f64> = (0..feats.rows()).flat_map(|r| m.forward(feats.row(r))).collect();
            FeatureMatrix::from_data(feats.rows(), m.outputs(), rows)?
        }
        None => feats,
    };
    Ok((per_point, global))
}

/// Replaces every filter by a constant map so outputs no longer depend on the cloud.
pub fn constant_weights(cfg: &SprinConfig, value: f64) -> Result<SprinWeights> {
    cfg.validate()?;
    let filters: Vec<MlpFilter> = cfg
        .filter_shapes()
        .into_iter()
        .map(|(c_in, c_out)| MlpFilter::constant(c_in, &vec![value; c_out]))
        .collect();
    let mut encoder = filters;
    let decoder = encoder.split_off(cfg.encoder.len());
    let fixed = |widths: &[usize]| -> Result<Option<Mlp>> {
        if widths.len() < 2 {
            return Ok(None);
        }
        let layers = widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Mlp::new(layers).map(Some)
    };
    let point_fc = if cfg.decoder.is_empty() { None } else { fixed(&cfg.point_widths())? };
    Ok(SprinWeights { encoder, decoder, point_fc, global_fc: fixed(&cfg.global_widths())? })
}
