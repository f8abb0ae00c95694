//! Compression stages and the codec registry.
//!
//! Point codecs, image codecs and lossless byte stages sit behind small
//! traits and are registered by name. The engine picks implementations at
//! runtime from [`EngineConfig`] (`point_codec`, `image_codec`,
//! `byte_stage`); stored files are decoded by extension.

pub mod image;
pub mod points;
pub mod stage;
pub mod tar;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::time::TimestampMs;
use crate::types::{ImageBuffer, PointCloud};

pub use self::points::{decode_points, encode_points, PointCodecParams};
pub use self::stage::{ByteStage, Identity, Zlib};
pub use self::tar::{tar_pack, tar_unpack_member, TarArchive, TarMember};

pub trait PointCodec: Send + Sync {
    fn name(&self) -> &'static str;
    /// File extension of encoded frames on the hot tier.
    fn extension(&self) -> &'static str;
    fn encode(&self, cloud: &PointCloud) -> Result<Vec<u8>>;
    fn decode(&self, bytes: &[u8]) -> Result<PointCloud>;
}

pub trait ImageCodec: Send + Sync {
    fn name(&self) -> &'static str;
    fn extension(&self) -> &'static str;
    fn encode(&self, img: &ImageBuffer, ts: TimestampMs) -> Result<Vec<u8>>;
    fn decode(&self, bytes: &[u8], ts: TimestampMs) -> Result<ImageBuffer>;
}

/// Parameters handed to codec constructors.
#[derive(Clone)]
pub struct CodecParams {
    pub point: PointCodecParams,
    pub image_quality: u8,
    pub stage: Arc<dyn ByteStage>,
}

impl Default for CodecParams {
    fn default() -> Self {
        CodecParams {
            point: PointCodecParams::default(),
            image_quality: 95,
            stage: Arc::new(Zlib::default()),
        }
    }
}

/// Quantize + Morton sort + delta varints + byte stage.
pub struct ApcCodec {
    pub params: PointCodecParams,
    pub stage: Arc<dyn ByteStage>,
}

impl PointCodec for ApcCodec {
    fn name(&self) -> &'static str {
        "apc"
    }

    fn extension(&self) -> &'static str {
        "apc"
    }

    fn encode(&self, cloud: &PointCloud) -> Result<Vec<u8>> {
        encode_points(cloud, &self.params, self.stage.as_ref())
    }

    fn decode(&self, bytes: &[u8]) -> Result<PointCloud> {
        decode_points(bytes)
    }
}

/// KITTI `.bin` pass-through (f32 quadruplets, no compression).
pub struct RawBinCodec;

impl PointCodec for RawBinCodec {
    fn name(&self) -> &'static str {
        "raw"
    }

    fn extension(&self) -> &'static str {
        "bin"
    }

    fn encode(&self, cloud: &PointCloud) -> Result<Vec<u8>> {
        cloud.validate()?;
        Ok(points::write_kitti_bin(cloud))
    }

    fn decode(&self, bytes: &[u8]) -> Result<PointCloud> {
        points::read_kitti_bin(bytes).map_err(Error::CorruptCloud)
    }
}

pub struct JpegCodec {
    pub quality: u8,
}

impl ImageCodec for JpegCodec {
    fn name(&self) -> &'static str {
        "jpeg"
    }

    fn extension(&self) -> &'static str {
        "jpg"
    }

    fn encode(&self, img: &ImageBuffer, ts: TimestampMs) -> Result<Vec<u8>> {
        image::encode_jpeg(img, self.quality, ts)
    }

    fn decode(&self, bytes: &[u8], ts: TimestampMs) -> Result<ImageBuffer> {
        image::decode_image(bytes, ts)
    }
}

pub struct PngCodec;

impl ImageCodec for PngCodec {
    fn name(&self) -> &'static str {
        "png"
    }

    fn extension(&self) -> &'static str {
        "png"
    }

    fn encode(&self, img: &ImageBuffer, ts: TimestampMs) -> Result<Vec<u8>> {
        image::encode_png(img, ts)
    }

    fn decode(&self, bytes: &[u8], ts: TimestampMs) -> Result<ImageBuffer> {
        image::decode_image(bytes, ts)
    }
}

pub type PointCodecCtor = fn(&CodecParams) -> Arc<dyn PointCodec>;
pub type ImageCodecCtor = fn(&CodecParams) -> Arc<dyn ImageCodec>;

/// Name-indexed codec constructors.
#[derive(Clone)]
pub struct CodecRegistry {
    points: BTreeMap<&'static str, PointCodecCtor>,
    images: BTreeMap<&'static str, ImageCodecCtor>,
    stages: BTreeMap<&'static str, Arc<dyn ByteStage>>,
}

impl Default for CodecRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl CodecRegistry {
    pub fn empty() -> Self {
        CodecRegistry {
            points: BTreeMap::new(),
            images: BTreeMap::new(),
            stages: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register_point("apc", |p| {
            Arc::new(ApcCodec {
                params: p.point,
                stage: p.stage.clone(),
            })
        });
        r.register_point("raw", |_| Arc::new(RawBinCodec));
        r.register_image("jpeg", |p| Arc::new(JpegCodec { quality: p.image_quality }));
        r.register_image("png", |_| Arc::new(PngCodec));
        r.register_stage(Arc::new(Identity));
        r.register_stage(Arc::new(Zlib::default()));
        r
    }

    pub fn register_point(&mut self, name: &'static str, ctor: PointCodecCtor) {
        self.points.insert(name, ctor);
    }

    pub fn register_image(&mut self, name: &'static str, ctor: ImageCodecCtor) {
        self.images.insert(name, ctor);
    }

    pub fn register_stage(&mut self, stage: Arc<dyn ByteStage>) {
        self.stages.insert(stage.name(), stage);
    }

    pub fn point_names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.points.keys().copied()
    }

    pub fn image_names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.images.keys().copied()
    }

    pub fn stage(&self, name: &str) -> Result<Arc<dyn ByteStage>> {
        self.stages.get(name).cloned().ok_or_else(|| Error::UnknownStrategy {
            kind: "byte stage",
            name: name.to_string(),
        })
    }

    pub fn point_codec(&self, name: &str, params: &CodecParams) -> Result<Arc<dyn PointCodec>> {
        let ctor = self.points.get(name).ok_or_else(|| Error::UnknownStrategy {
            kind: "point codec",
            name: name.to_string(),
        })?;
        Ok(ctor(params))
    }

    pub fn image_codec(&self, name: &str, params: &CodecParams) -> Result<Arc<dyn ImageCodec>> {
        let ctor = self.images.get(name).ok_or_else(|| Error::UnknownStrategy {
            kind: "image codec",
            name: name.to_string(),
        })?;
        Ok(ctor(params))
    }

    /// Codec able to decode a stored point file with this extension.
    pub fn point_decoder_for(&self, ext: &str) -> Result<Arc<dyn PointCodec>> {
        let params = CodecParams::default();
        self.points
            .values()
            .map(|ctor| ctor(&params))
            .find(|c| c.extension() == ext)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "point file extension",
                name: ext.to_string(),
            })
    }

    pub fn image_decoder_for(&self, ext: &str) -> Result<Arc<dyn ImageCodec>> {
        let params = CodecParams::default();
        self.images
            .values()
            .map(|ctor| ctor(&params))
            .find(|c| c.extension() == ext)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "image file extension",
                name: ext.to_string(),
            })
    }

    /// Resolves the codecs selected by `config`.
    pub fn resolve(&self, config: &EngineConfig) -> Result<Codecs> {
        let params = CodecParams {
            point: PointCodecParams {
                quant_m: config.point_quant_m,
                includes_intensity: true,
            },
            image_quality: config.image_quality,
            stage: self.stage(&config.byte_stage)?,
        };
        Ok(Codecs {
            point: self.point_codec(&config.point_codec, &params)?,
            image: self.image_codec(&config.image_codec, &params)?,
        })
    }
}

/// The point and image codec an engine instance writes with.
#[derive(Clone)]
pub struct Codecs {
    pub point: Arc<dyn PointCodec>,
    pub image: Arc<dyn ImageCodec>,
}
