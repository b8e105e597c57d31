use std::collections::HashMap;
use std::fmt::Write as _;

use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng;

/// Architecture of the encoder–decoder network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Resolution levels, bottleneck included. `levels - 1` poolings.
    pub levels: usize,
    /// Feature width at the first level; doubled at every level below.
    pub base_features: usize,
    /// 2 for images, 3 for volumes.
    pub spatial_rank: usize,
    pub in_channels: usize,
    pub residual: bool,
    /// Training patch extent along every spatial axis.
    pub patch_extent: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            levels: 2,
            base_features: 8,
            spatial_rank: 2,
            in_channels: 1,
            residual: true,
            patch_extent: 32,
        }
    }
}

impl ModelConfig {
    /// Full-size three-level volumetric network with 32 initial features.
    pub fn full_scale() -> Self {
        ModelConfig {
            levels: 3,
            base_features: 32,
            spatial_rank: 3,
            in_channels: 1,
            residual: true,
            patch_extent: 64,
        }
    }

    pub fn feature_widths(&self) -> Vec<usize> {
        (0..self.levels).map(|i| self.base_features << i).collect()
    }

    /// Required divisor of every spatial extent fed to the network.
    pub fn extent_divisor(&self) -> usize {
        1 << (self.levels.saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.base_features == 0 || self.in_channels == 0 {
            return Err(Error::Config(
                "levels, base_features and in_channels must be ≥ 1".into(),
            ));
        }
        if !matches!(self.spatial_rank, 2 | 3) {
            return Err(Error::Config(format!(
                "spatial_rank must be 2 or 3, got {}",
                self.spatial_rank
            )));
        }
        if self.levels > 16 {
            return Err(Error::Config(format!("{} levels is too deep", self.levels)));
        }
        let div = self.extent_divisor();
        // A 3-wide kernel on a 1-voxel bottleneck only ever sees its centre
        // tap, so the bottleneck must keep at least 2 voxels per axis.
        let min_extent = if self.levels > 1 { 2 * div } else { 1 };
        if !self.patch_extent.is_multiple_of(div) || self.patch_extent < min_extent {
            let mut chain = vec![self.patch_extent.to_string()];
            let mut e = self.patch_extent;
            for _ in 1..self.levels {
                e /= 2;
                chain.push(e.to_string());
            }
            return Err(Error::Config(format!(
                "{} levels do not fit a {}-voxel patch (extents {})",
                self.levels,
                self.patch_extent,
                chain.join(" → ")
            )));
        }
        Ok(())
    }

    /// `key = value` lines, also used as the checkpoint header.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "levels = {}", self.levels);
        let _ = writeln!(s, "base_features = {}", self.base_features);
        let _ = writeln!(s, "spatial_rank = {}", self.spatial_rank);
        let _ = writeln!(s, "in_channels = {}", self.in_channels);
        let _ = writeln!(s, "residual = {}", self.residual);
        let _ = writeln!(s, "patch_extent = {}", self.patch_extent);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("malformed model line `{line}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let int = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("{key}: expected an integer, got `{v}`")))
        };
        match key {
            "levels" => self.levels = int(value)?,
            "base_features" => self.base_features = int(value)?,
            "spatial_rank" => self.spatial_rank = int(value)?,
            "in_channels" => self.in_channels = int(value)?,
            "patch_extent" => self.patch_extent = int(value)?,
            "residual" => {
                self.residual = value.parse().map_err(|_| {
                    Error::Config(format!("residual: expected true/false, got `{value}`"))
                })?
            }
            other => return Err(Error::Config(format!("unknown model key `{other}`"))),
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Residual U-Net with a normalized-ReLU soft-segmentation head.
///
/// Parameters are named `enc{i}.*` for encoder levels, `dec{i}.*` for
/// decoder levels and `head.*` for the output projection.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    seed: u64,
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

struct Builder<'a> {
    rank: usize,
    rng: &'a mut rng::Rng,
    params: Vec<Param>,
}

impl Builder<'_> {
    fn conv(&mut self, name: &str, out_ch: usize, in_ch: usize, k: usize) {
        let mut shape = vec![out_ch, in_ch];
        shape.extend(std::iter::repeat_n(k, self.rank));
        let fan_in = in_ch * k.pow(self.rank as u32);
        let std = (2.0 / fan_in as f64).sqrt();
        let rng = &mut *self.rng;
        let weight = Tensor::from_fn(&shape, |_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        });
        self.params.push(Param {
            name: format!("{name}.weight"),
            value: weight,
        });
        self.params.push(Param {
            name: format!("{name}.bias"),
            value: Tensor::zeros(&[out_ch]),
        });
    }

    fn block(&mut self, prefix: &str, in_ch: usize, out_ch: usize, residual: bool) {
        self.conv(&format!("{prefix}.conv1"), out_ch, in_ch, 3);
        self.conv(&format!("{prefix}.conv2"), out_ch, out_ch, 3);
        if residual && in_ch != out_ch {
            self.conv(&format!("{prefix}.skip"), out_ch, in_ch, 1);
        }
    }
}

/// Head bias at initialization; keeps early pre-activations positive so the
/// normalized ReLU does not start out dead.
const HEAD_BIAS_INIT: f64 = 0.1;

impl Model {
    /// He-initialized weights (fan-in scaling), zero biases, drawn from a
    /// ChaCha8 stream seeded with `seed`.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let widths = config.feature_widths();
        let mut rng = rng::seeded(seed);
        let mut b = Builder {
            rank: config.spatial_rank,
            rng: &mut rng,
            params: Vec::new(),
        };
        let mut in_ch = config.in_channels;
        for (i, &w) in widths.iter().enumerate() {
            b.block(&format!("enc{i}"), in_ch, w, config.residual);
            in_ch = w;
        }
        for i in (0..config.levels - 1).rev() {
            b.conv(&format!("dec{i}.up"), widths[i], widths[i + 1], 3);
            b.block(
                &format!("dec{i}"),
                2 * widths[i],
                widths[i],
                config.residual,
            );
        }
        b.conv("head", 1, widths[0], 1);
        let mut params = b.params;
        if let Some(p) = params.iter_mut().find(|p| p.name == "head.bias") {
            p.value.data_mut().fill(HEAD_BIAS_INIT);
        }
        Model::from_parts(config, seed, params)
    }

    pub(crate) fn from_parts(config: ModelConfig, seed: u64, params: Vec<Param>) -> Result<Model> {
        let index = params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect::<HashMap<_, _>>();
        if index.len() != params.len() {
            return Err(Error::Config("duplicate parameter names".into()));
        }
        Ok(Model {
            config,
            seed,
            params,
            index,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].value)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.params[i].value)
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn is_encoder_param(name: &str) -> bool {
        name.starts_with("enc")
    }

    /// Records every parameter on `tape`, trainable or constant, in
    /// [`Model::params`] order.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    tape.param(p.value.clone())
                } else {
                    tape.leaf(p.value.clone())
                }
            })
            .collect()
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let rank = self.config.spatial_rank;
        if shape.len() != rank + 2 || shape[1] != self.config.in_channels {
            return Err(Error::Shape(format!(
                "expected [N, {}, {} spatial axes], got {shape:?}",
                self.config.in_channels, rank
            )));
        }
        let div = self.config.extent_divisor();
        if shape[2..].iter().any(|&e| e % div != 0) {
            return Err(Error::Shape(format!(
                "spatial extents {:?} must be divisible by {div}",
                &shape[2..]
            )));
        }
        Ok(())
    }

    /// Records the forward pass on `tape` and returns the soft mask
    /// `[N, 1, spatial..]`.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], input: Var) -> Result<Var> {
        let z = self.forward_logits(tape, vars, input)?;
        tape.normalized_relu(z)
    }

    /// Forward pass up to the head pre-activation.
    pub fn forward_logits(&self, tape: &mut Tape, vars: &[Var], input: Var) -> Result<Var> {
        if vars.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "{} parameter handles for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        self.check_input(tape.value(input).shape())?;
        let p = |name: &str| vars[self.index[name]];
        let conv = |tape: &mut Tape, x: Var, name: &str| -> Result<Var> {
            tape.conv(x, p(&format!("{name}.weight")), p(&format!("{name}.bias")))
        };
        let block = |tape: &mut Tape, x: Var, prefix: &str| -> Result<Var> {
            let h = conv(tape, x, &format!("{prefix}.conv1"))?;
            let h = tape.relu(h)?;
            let mut h = conv(tape, h, &format!("{prefix}.conv2"))?;
            if self.config.residual {
                let skip_name = format!("{prefix}.skip.weight");
                let shortcut = if self.index.contains_key(&skip_name) {
                    conv(tape, x, &format!("{prefix}.skip"))?
                } else {
                    x
                };
                h = tape.add(h, shortcut)?;
            }
            tape.relu(h)
        };

        let levels = self.config.levels;
        let mut skips = Vec::with_capacity(levels);
        let mut x = input;
        for i in 0..levels {
            x = block(tape, x, &format!("enc{i}"))?;
            if i + 1 < levels {
                skips.push(x);
                x = tape.max_pool2(x)?;
            }
        }
        for i in (0..levels - 1).rev() {
            let up = tape.upsample2(x)?;
            let up = conv(tape, up, &format!("dec{i}.up"))?;
            let up = tape.relu(up)?;
            let merged = tape.concat_channels(up, skips[i])?;
            x = block(tape, merged, &format!("dec{i}"))?;
        }
        conv(tape, x, "head")
    }

    /// Soft mask for a `[N, C, spatial..]` batch; values in `[0, 1]`, no
    /// binarization.
    pub fn predict(&self, patch: &Tensor) -> Result<Tensor> {
        self.check_input(patch.shape())?;
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let x = tape.leaf(patch.clone());
        let y = self.forward(&mut tape, &vars, x)?;
        Ok(tape.value(y).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_double_per_level() {
        let cfg = ModelConfig {
            levels: 3,
            base_features: 32,
            ..ModelConfig::default()
        };
        assert_eq!(cfg.feature_widths(), vec![32, 64, 128]);
    }

    #[test]
    fn too_deep_for_patch_is_config_error() {
        let cfg = ModelConfig {
            levels: 4,
            patch_extent: 8,
            ..ModelConfig::default()
        };
        assert!(matches!(Model::build(cfg, 0), Err(Error::Config(_))));
        let cfg = ModelConfig {
            levels: 3,
            patch_extent: 8,
            ..ModelConfig::default()
        };
        assert!(Model::build(cfg, 0).is_ok());
    }

    #[test]
    fn build_is_deterministic() {
        let a = Model::build(ModelConfig::default(), 5).unwrap();
        let b = Model::build(ModelConfig::default(), 5).unwrap();
        assert_eq!(a, b);
        let c = Model::build(ModelConfig::default(), 6).unwrap();
        assert_ne!(a.params()[0], c.params()[0]);
    }

    #[test]
    fn rejects_indivisible_input() {
        let m = Model::build(ModelConfig::default(), 0).unwrap();
        assert!(matches!(
            m.predict(&Tensor::zeros(&[1, 1, 10, 11])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn zeroed_head_gives_empty_mask() {
        let mut m = Model::build(ModelConfig::default(), 1).unwrap();
        m.param_mut("head.weight").unwrap().data_mut().fill(0.0);
        m.param_mut("head.bias").unwrap().data_mut().fill(0.0);
        let x = Tensor::from_fn(&[1, 1, 16, 16], |i| ((i * 37) % 11) as f64 / 11.0);
        let y = m.predict(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn config_text_round_trips() {
        let cfg = ModelConfig::full_scale();
        assert_eq!(ModelConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }
}
