//! End-to-end feature extractors, descriptor matching, the toy data set and
//! the classification head.

mod descriptor;
mod head;
mod prin;
mod sprin_net;
mod toy;

pub use descriptor::{match_descriptors, Descriptor, Matching};
pub use head::{train_head, Head, HeadConfig, TrainReport};
pub use prin::{prin_forward, prin_voxel_features, PrinConfig, PrinConv, PrinWeights};
pub use sprin_net::{
    constant_weights, sprin_forward, sprin_global, BlockOp, SprinBlock, SprinConfig, SprinWeights,
};
pub use toy::{run_toy, sample_surface, toy_synth, ToyClass, ToyProtocol, ToyReport, ToySample};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::io::{Tensor, TensorArchive};
use crate::resample::FeatureMatrix;
use crate::sprin::{Aggregation, Dense, Mlp};
use crate::voxelizer::{SamplingConfig, SamplingMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineKind {
    Prin,
    Sprin,
}

impl FromStr for PipelineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prin" => Ok(PipelineKind::Prin),
            "sprin" => Ok(PipelineKind::Sprin),
            other => Err(Error::InvalidParameter(format!("unknown pipeline `{other}`"))),
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipelineKind::Prin => "prin",
            PipelineKind::Sprin => "sprin",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkConfig {
    Prin(PrinConfig),
    Sprin(SprinConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Prin(PrinWeights),
    Sprin(SprinWeights),
}

impl NetworkConfig {
    pub fn kind(&self) -> PipelineKind {
        match self {
            NetworkConfig::Prin(_) => PipelineKind::Prin,
            NetworkConfig::Sprin(_) => PipelineKind::Sprin,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NetworkConfig::Prin(c) => c.validate(),
            NetworkConfig::Sprin(c) => c.validate(),
        }
    }

    /// Key/value description stored alongside weights.
    pub fn meta(&self) -> Vec<(&'static str, String)> {
        let mut m = vec![("pipeline", self.kind().to_string())];
        match self {
            NetworkConfig::Prin(c) => {
                m.push(("bandwidth", c.bandwidth.to_string()));
                m.push(("xi", c.sampling.xi.to_string()));
                m.push(("mode", mode_name(c.sampling.mode).into()));
                m.push(("conv_widths", join(&c.conv_widths)));
                m.push(("fc_widths", join(&c.fc_widths)));
                m.push(("shells_as_channels", c.shells_as_channels.to_string()));
            }
            NetworkConfig::Sprin(c) => {
                m.push(("encoder", sprin_net::format_blocks(&c.encoder)));
                m.push(("decoder", sprin_net::format_blocks(&c.decoder)));
                m.push(("filter_hidden", join(&c.filter_hidden)));
                m.push(("point_fc", join(&c.point_fc)));
                m.push(("global_fc", join(&c.global_fc)));
                m.push((
                    "aggregation",
                    match c.aggregation {
                        Aggregation::Mean => "mean".into(),
                        Aggregation::Max => "max".into(),
                    },
                ));
            }
        }
        m
    }

    pub fn from_archive(a: &TensorArchive) -> Result<Self> {
        let kind: PipelineKind = a.require_meta("pipeline")?.parse()?;
        let widths = |key: &str| parse_widths(a.require_meta(key)?);
        let cfg = match kind {
            PipelineKind::Prin => NetworkConfig::Prin(PrinConfig {
                bandwidth: parse_meta(a, "bandwidth")?,
                sampling: SamplingConfig::new(parse_meta(a, "xi")?, a.require_meta("mode")?.parse()?)?,
                conv_widths: widths("conv_widths")?,
                fc_widths: widths("fc_widths")?,
                shells_as_channels: parse_meta(a, "shells_as_channels")?,
                engine: Default::default(),
            }),
            PipelineKind::Sprin => NetworkConfig::Sprin(SprinConfig {
                encoder: sprin_net::parse_blocks(a.require_meta("encoder")?)?,
                decoder: sprin_net::parse_blocks(a.require_meta("decoder")?)?,
                filter_hidden: widths("filter_hidden")?,
                point_fc: widths("point_fc")?,
                global_fc: widths("global_fc")?,
                aggregation: a.require_meta("aggregation")?.parse()?,
            }),
        };
        cfg.validate().map_err(|e| Error::Archive(format!("stored configuration is invalid: {e}")))?;
        Ok(cfg)
    }

    /// 64-bit FNV-1a of the metadata, used to tag descriptors.
    pub fn config_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (k, v) in self.meta() {
            for byte in k.bytes().chain(*b"=").chain(v.bytes()).chain(*b"\n") {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

fn mode_name(m: SamplingMode) -> &'static str {
    match m {
        SamplingMode::Daas => "daas",
        SamplingMode::Uniform => "uniform",
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_widths(s: &str) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|t| t.parse().map_err(|_| Error::Archive(format!("bad width list `{s}`")))).collect()
}

fn parse_meta<T: FromStr>(a: &TensorArchive, key: &str) -> Result<T> {
    let v = a.require_meta(key)?;
    v.parse().map_err(|_| Error::Archive(format!("bad value `{v}` for `{key}`")))
}

/// Seeded scaled-normal weights for every filter and head layer.
pub fn init_weights(cfg: &NetworkConfig, seed: u64) -> Result<Weights> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match cfg {
        NetworkConfig::Prin(c) => Weights::Prin(PrinWeights::random(c, &mut rng)?),
        NetworkConfig::Sprin(c) => Weights::Sprin(SprinWeights::random(c, &mut rng)?),
    })
}

pub fn weights_to_archive(cfg: &NetworkConfig, w: &Weights) -> Result<TensorArchive> {
    let mut a = TensorArchive::new();
    for (k, v) in cfg.meta() {
        a.set_meta(k, v)?;
    }
    match (cfg, w) {
        (NetworkConfig::Prin(c), Weights::Prin(w)) => {
            w.check(c)?;
            w.write(&mut a)?;
        }
        (NetworkConfig::Sprin(c), Weights::Sprin(w)) => {
            w.check(c)?;
            w.write(&mut a)?;
        }
        _ => return Err(Error::InvalidParameter("weights belong to a different pipeline".into())),
    }
    Ok(a)
}

pub fn weights_from_archive(a: &TensorArchive) -> Result<(NetworkConfig, Weights)> {
    let cfg = NetworkConfig::from_archive(a)?;
    let w = match &cfg {
        NetworkConfig::Prin(c) => Weights::Prin(PrinWeights::read(a, c)?),
        NetworkConfig::Sprin(c) => Weights::Sprin(SprinWeights::read(a, c)?),
    };
    Ok((cfg, w))
}

fn pair<'a>(cfg: &'a NetworkConfig, w: &'a Weights) -> Result<(&'a NetworkConfig, &'a Weights)> {
    match (cfg, w) {
        (NetworkConfig::Prin(_), Weights::Prin(_)) | (NetworkConfig::Sprin(_), Weights::Sprin(_)) => {
            Ok((cfg, w))
        }
        _ => Err(Error::InvalidParameter("weights belong to a different pipeline".into())),
    }
}

/// Per-point and global features with either pipeline. `seed` only matters
/// for the sparse pipeline's dilated neighborhoods.
pub fn extract_features(
    points: &[Vec3],
    cfg: &NetworkConfig,
    w: &Weights,
    seed: u64,
) -> Result<(FeatureMatrix, Vec<f64>)> {
    match pair(cfg, w)? {
        (NetworkConfig::Prin(c), Weights::Prin(w)) => prin_forward(points, w, c),
        (NetworkConfig::Sprin(c), Weights::Sprin(w)) => sprin_forward(points, w, c, seed),
        _ => unreachable!(),
    }
}

/// Global feature only, skipping work that only per-point features need.
pub fn extract_global(points: &[Vec3], cfg: &NetworkConfig, w: &Weights, seed: u64) -> Result<Vec<f64>> {
    match pair(cfg, w)? {
        (NetworkConfig::Prin(c), Weights::Prin(w)) => prin_forward(points, w, c).map(|r| r.1),
        (NetworkConfig::Sprin(c), Weights::Sprin(w)) => sprin_global(points, w, c, seed),
        _ => unreachable!(),
    }
}

pub(crate) fn put_mlp(a: &mut TensorArchive, prefix: &str, m: &Mlp) -> Result<()> {
    for (l, layer) in m.layers().iter().enumerate() {
        let dims = vec![layer.outputs() as u64, layer.inputs() as u64];
        a.insert(format!("{prefix}/fc{l}/weight"), Tensor::from_f64(dims, layer.weights())?)?;
        a.insert(
            format!("{prefix}/fc{l}/bias"),
            Tensor::from_f64(vec![layer.outputs() as u64], layer.bias())?,
        )?;
    }
    Ok(())
}

pub(crate) fn get_mlp(a: &TensorArchive, prefix: &str, widths: &[usize]) -> Result<Mlp> {
    let mut layers = Vec::new();
    for (l, w) in widths.windows(2).enumerate() {
        let weight = a.require(&format!("{prefix}/fc{l}/weight"))?;
        let bias = a.require(&format!("{prefix}/fc{l}/bias"))?;
        if weight.dims() != [w[1] as u64, w[0] as u64] || bias.dims() != [w[1] as u64] {
            return Err(Error::DimensionMismatch(format!("{prefix}/fc{l} has dims {:?}", weight.dims())));
        }
        layers.push(Dense::new(w[0], w[1], weight.to_f64(), bias.to_f64())?);
    }
    Mlp::new(layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_seed_gives_identical_weights() {
        for cfg in [NetworkConfig::Prin(PrinConfig::default()), NetworkConfig::Sprin(SprinConfig::default())]
        {
            let a = weights_to_archive(&cfg, &init_weights(&cfg, 3).unwrap()).unwrap().to_bytes();
            let b = weights_to_archive(&cfg, &init_weights(&cfg, 3).unwrap()).unwrap().to_bytes();
            let c = weights_to_archive(&cfg, &init_weights(&cfg, 4).unwrap()).unwrap().to_bytes();
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn init_variance_matches_fan_in() {
        let cfg = SprinConfig::default();
        let Weights::Sprin(w) = init_weights(&NetworkConfig::Sprin(cfg), 11).unwrap() else { unreachable!() };
        // second encoder filter: 8 + 64 inputs
        let first = &w.encoder[1].mlp().layers()[0];
        let n = first.weights().len() as f64;
        let var = first.weights().iter().map(|v| v * v).sum::<f64>() / n;
        assert!((var / (2.0 / 72.0) - 1.0).abs() < 0.1, "{var}");
        let second = &w.encoder[1].mlp().layers()[1];
        let var = second.weights().iter().map(|v| v * v).sum::<f64>() / second.weights().len() as f64;
        assert!((var / (2.0 / 64.0) - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn config_survives_archive() {
        for cfg in [
            NetworkConfig::Prin(PrinConfig { shells_as_channels: true, ..PrinConfig::with_bandwidth(4) }),
            NetworkConfig::Sprin(SprinConfig::with_width(16).unit_dilation()),
        ] {
            let w = init_weights(&cfg, 1).unwrap();
            let a = TensorArchive::from_bytes(&weights_to_archive(&cfg, &w).unwrap().to_bytes()).unwrap();
            let (back, _) = weights_from_archive(&a).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.config_hash(), cfg.config_hash());
        }
        let a = NetworkConfig::Sprin(SprinConfig::default());
        let b = NetworkConfig::Sprin(SprinConfig::default().unit_dilation());
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn mismatched_pipeline_is_rejected() {
        let prin = NetworkConfig::Prin(PrinConfig::with_bandwidth(4));
        let sprin = NetworkConfig::Sprin(SprinConfig::with_width(8));
        let w = init_weights(&sprin, 0).unwrap();
        assert!(weights_to_archive(&prin, &w).is_err());
        assert!(extract_global(&[Vec3::ZERO], &prin, &w, 0).is_err());
    }
}
