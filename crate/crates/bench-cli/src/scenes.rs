use std::fmt;
use std::str::FromStr;

use conv_core::{ConvParams, ConvShape};
use serde::{Deserialize, Serialize};

use crate::error::BenchError;

pub const SMALL_CHANNELS: [usize; 4] = [16, 32, 48, 64];
pub const MEDIUM_CHANNELS: [usize; 4] = [64, 128, 192, 256];
pub const BIG_CHANNELS: [usize; 4] = [256, 512, 768, 1024];
pub const BATCHES: [usize; 3] = [64, 128, 256];
pub const FILTER_SIZES: [usize; 5] = [3, 5, 7, 9, 11];
/// `(pad, stride)` pairs.
pub const PAD_STRIDE: [(usize, usize); 4] = [(0, 1), (1, 1), (0, 2), (1, 2)];

/// Distinct channel values of the three channel sets, ascending.
pub fn channel_values() -> Vec<usize> {
    let mut v: Vec<usize> = SMALL_CHANNELS
        .iter()
        .chain(&MEDIUM_CHANNELS)
        .chain(&BIG_CHANNELS)
        .copied()
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Distinct `(IC, OC)` pairs of the three channel crosses, in set order.
pub fn channel_grid() -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for set in [SMALL_CHANNELS, MEDIUM_CHANNELS, BIG_CHANNELS] {
        for &ic in &set {
            for &oc in &set {
                if !pairs.contains(&(ic, oc)) {
                    pairs.push((ic, oc));
                }
            }
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneSet {
    ChannelsSmall,
    ChannelsMedium,
    ChannelsBig,
    Batch,
    Filter,
    Padstride,
    Custom,
}

impl SceneSet {
    pub const ALL: [SceneSet; 7] = [
        SceneSet::ChannelsSmall,
        SceneSet::ChannelsMedium,
        SceneSet::ChannelsBig,
        SceneSet::Batch,
        SceneSet::Filter,
        SceneSet::Padstride,
        SceneSet::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SceneSet::ChannelsSmall => "channels-small",
            SceneSet::ChannelsMedium => "channels-medium",
            SceneSet::ChannelsBig => "channels-big",
            SceneSet::Batch => "batch",
            SceneSet::Filter => "filter",
            SceneSet::Padstride => "padstride",
            SceneSet::Custom => "custom",
        }
    }
}

impl fmt::Display for SceneSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneSet {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SceneSet::ALL
            .into_iter()
            .find(|set| set.name() == s)
            .ok_or_else(|| BenchError::UnknownSet(s.to_string()))
    }
}

/// Values the paper leaves open. Every generated scene takes its unswept
/// parameters from here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneDefaults {
    pub batch: usize,
    pub in_size: usize,
    pub filter: usize,
    pub pad: usize,
    pub stride: usize,
}

impl Default for SceneDefaults {
    fn default() -> Self {
        Self {
            batch: 128,
            in_size: 16,
            filter: 3,
            pad: 0,
            stride: 1,
        }
    }
}

impl SceneDefaults {
    /// `# key=value ...` line written above every CSV.
    pub fn header_comment(&self) -> String {
        format!(
            "# batch={} in_size={} filter={} pad={} stride={}",
            self.batch, self.in_size, self.filter, self.pad, self.stride
        )
    }

    fn shape(&self, b: usize, ic: usize, oc: usize) -> Result<ConvShape, BenchError> {
        self.shape_with(b, ic, oc, self.filter, self.pad, self.stride)
    }

    fn shape_with(
        &self,
        b: usize,
        ic: usize,
        oc: usize,
        filter: usize,
        pad: usize,
        stride: usize,
    ) -> Result<ConvShape, BenchError> {
        let p = ConvParams::square(
            b as i64,
            ic as i64,
            oc as i64,
            self.in_size as i64,
            filter as i64,
            pad as i64,
            stride as i64,
        );
        Ok(ConvShape::new(p)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scene {
    pub set: SceneSet,
    pub index: usize,
    pub shape: ConvShape,
}

/// Scenes of a generated set. `custom` scenes come from [`parse_scene_file`].
pub fn gen_scenes(set: SceneSet, d: &SceneDefaults) -> Result<Vec<Scene>, BenchError> {
    let mut shapes = Vec::new();
    match set {
        SceneSet::ChannelsSmall | SceneSet::ChannelsMedium | SceneSet::ChannelsBig => {
            let values = match set {
                SceneSet::ChannelsSmall => SMALL_CHANNELS,
                SceneSet::ChannelsMedium => MEDIUM_CHANNELS,
                _ => BIG_CHANNELS,
            };
            for &ic in &values {
                for &oc in &values {
                    shapes.push(d.shape(d.batch, ic, oc)?);
                }
            }
        }
        SceneSet::Batch => {
            for &b in &BATCHES {
                for c in channel_values() {
                    shapes.push(d.shape(b, c, c)?);
                }
            }
        }
        SceneSet::Filter => {
            for &f in &FILTER_SIZES {
                for c in channel_values() {
                    shapes.push(d.shape_with(d.batch, c, c, f, d.pad, d.stride)?);
                }
            }
        }
        SceneSet::Padstride => {
            for &(pad, stride) in &PAD_STRIDE {
                for c in channel_values() {
                    shapes.push(d.shape_with(d.batch, c, c, d.filter, pad, stride)?);
                }
            }
        }
        SceneSet::Custom => return Err(BenchError::Usage("the custom set needs --scenes or --ic/--oc".into())),
    }
    Ok(label(set, shapes))
}

/// One custom scene from explicit channel counts and the defaults.
pub fn custom_scene(ic: usize, oc: usize, d: &SceneDefaults) -> Result<Scene, BenchError> {
    Ok(Scene {
        set: SceneSet::Custom,
        index: 0,
        shape: d.shape(d.batch, ic, oc)?,
    })
}

/// Grain-map scenes for one batch size.
pub fn grid_scenes(b: usize, d: &SceneDefaults) -> Result<Vec<Scene>, BenchError> {
    let shapes = channel_grid()
        .into_iter()
        .map(|(ic, oc)| d.shape(b, ic, oc))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(label(SceneSet::Custom, shapes))
}

fn label(set: SceneSet, shapes: Vec<ConvShape>) -> Vec<Scene> {
    shapes
        .into_iter()
        .enumerate()
        .map(|(index, shape)| Scene { set, index, shape })
        .collect()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SceneFile {
    One(ConvParams),
    Many(Vec<ConvParams>),
}

/// A JSON object or array of objects with the convolution parameters.
pub fn parse_scene_file(text: &str) -> Result<Vec<Scene>, BenchError> {
    let params = match serde_json::from_str(text).map_err(|e| BenchError::SceneFile(e.to_string()))? {
        SceneFile::One(p) => vec![p],
        SceneFile::Many(v) => v,
    };
    if params.is_empty() {
        return Err(BenchError::SceneFile("no scenes".into()));
    }
    let shapes = params
        .into_iter()
        .map(ConvShape::new)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(label(SceneSet::Custom, shapes))
}
