use fmn_autodiff::{Scalar, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{NetworkConfig, ENCODER_STRIDE, SOIL_OUT_CHANNELS};
use crate::error::{Error, Result};
use crate::labels::SoilClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Encoder,
    Segmentation,
    Detection,
    Soiling,
}

impl ParamGroup {
    fn stream(self) -> u64 {
        match self {
            ParamGroup::Encoder => 0,
            ParamGroup::Segmentation => 1,
            ParamGroup::Detection => 2,
            ParamGroup::Soiling => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct ConvLayer {
    kernel: usize,
    bias: usize,
    in_channels: usize,
    out_channels: usize,
    size: usize,
    stride: usize,
}

impl ConvLayer {
    fn padding(&self) -> usize {
        self.size / 2
    }

    /// Multiply-accumulates and output size for an `h`×`w` input.
    fn cost(&self, h: usize, w: usize) -> (u64, usize, usize) {
        let oh = (h + 2 * self.padding() - self.size) / self.stride + 1;
        let ow = (w + 2 * self.padding() - self.size) / self.stride + 1;
        let macs = (self.out_channels * oh * ow * self.in_channels * self.size * self.size) as u64;
        (macs, oh, ow)
    }
}

#[derive(Debug, Clone, Copy)]
struct ResBlock {
    conv1: ConvLayer,
    conv2: ConvLayer,
    shortcut: ConvLayer,
}

#[derive(Debug, Clone)]
struct Encoder {
    stem: ConvLayer,
    blocks: Vec<ResBlock>,
}

#[derive(Debug, Clone)]
struct SegDecoder {
    score: ConvLayer,
    stages: Vec<ConvLayer>,
    skip16: Option<ConvLayer>,
    skip8: Option<ConvLayer>,
}

#[derive(Debug, Clone, Copy)]
struct HeadDecoder {
    hidden: ConvLayer,
    out: ConvLayer,
}

/// Variables of one forward pass recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct OutputVars {
    pub seg_logits: Option<Var>,
    pub det_grid: Option<Var>,
    pub soiling_grid: Option<Var>,
    pub soiling_indicators: Option<Var>,
}

/// Decoder outputs for one image. Absent decoders yield `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutputs<T = f32> {
    /// `[K_s, H, W]`
    pub seg_logits: Option<Tensor<T>>,
    /// `[K_d + 1 + 4, H/32, W/32]`: class logits with background last, then tx, ty, tw, th.
    pub det_grid: Option<Tensor<T>>,
    /// `[3, rows, cols]` logits over {clean, transparent, opaque}.
    pub soiling_grid: Option<Tensor<T>>,
    /// `[2]` raw scores for {opaque, transparent}.
    pub soiling_indicators: Option<Tensor<T>>,
}

struct Builder<T> {
    params: Vec<Tensor<T>>,
    infos: Vec<ParamInfo>,
    seed: u64,
}

impl<T: Scalar> Builder<T> {
    fn rng(&self, group: ParamGroup) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(group.stream());
        rng
    }

    fn push(&mut self, name: String, group: ParamGroup, tensor: Tensor<T>) -> usize {
        self.infos.push(ParamInfo {
            name,
            group,
            shape: tensor.shape().to_vec(),
        });
        self.params.push(tensor);
        self.params.len() - 1
    }

    /// He-normal kernel (std √(2/fan_in)) and zero bias.
    fn conv(
        &mut self,
        rng: &mut ChaCha8Rng,
        group: ParamGroup,
        name: &str,
        (cin, cout): (usize, usize),
        size: usize,
        stride: usize,
    ) -> ConvLayer {
        let fan_in = cin * size * size;
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
        let values = (0..cout * fan_in)
            .map(|_| T::lit(normal.sample(rng)))
            .collect();
        let kernel = Tensor::new(vec![cout, cin, size, size], values).expect("kernel shape");
        let kernel = self.push(format!("{name}.kernel"), group, kernel);
        let bias = self.push(format!("{name}.bias"), group, Tensor::zeros(vec![cout]));
        ConvLayer {
            kernel,
            bias,
            in_channels: cin,
            out_channels: cout,
            size,
            stride,
        }
    }
}

/// Shared ResNet-style encoder with segmentation, detection and soiling decoders.
#[derive(Debug, Clone)]
pub struct Network<T = f32> {
    config: NetworkConfig,
    params: Vec<Tensor<T>>,
    infos: Vec<ParamInfo>,
    encoder: Encoder,
    seg: Option<SegDecoder>,
    det: Option<HeadDecoder>,
    soil: Option<HeadDecoder>,
}

impl<T: Scalar> Network<T> {
    /// Builds the network with seeded initialization.
    ///
    /// Every parameter group draws from its own stream of the seed, so the
    /// encoder of a single-task network equals the encoder of the multi-task
    /// network built from the same seed.
    pub fn build(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut b = Builder {
            params: Vec::new(),
            infos: Vec::new(),
            seed,
        };

        let g = ParamGroup::Encoder;
        let mut rng = b.rng(g);
        let stem = b.conv(&mut rng, g, "encoder.stem", (3, config.stem_channels), 7, 2);
        let mut blocks = Vec::with_capacity(4);
        let mut cin = config.stem_channels;
        for (i, &cout) in config.stage_channels.iter().enumerate() {
            let name = format!("encoder.stage{}", i + 1);
            let conv1 = b.conv(&mut rng, g, &format!("{name}.conv1"), (cin, cout), 3, 2);
            let conv2 = b.conv(&mut rng, g, &format!("{name}.conv2"), (cout, cout), 3, 1);
            let shortcut = b.conv(&mut rng, g, &format!("{name}.shortcut"), (cin, cout), 1, 2);
            blocks.push(ResBlock {
                conv1,
                conv2,
                shortcut,
            });
            cin = cout;
        }
        let encoder = Encoder { stem, blocks };
        let [_, c8, c16, c32] = config.stage_channels;

        let seg = config.tasks.seg.then(|| {
            let g = ParamGroup::Segmentation;
            let mut rng = b.rng(g);
            let d = config.seg_decoder_channels;
            let score = b.conv(&mut rng, g, "seg.score32", (c32, d), 1, 1);
            let skip16 = (config.skip_connections >= 1)
                .then(|| b.conv(&mut rng, g, "seg.skip16", (c16, d), 1, 1));
            let skip8 = (config.skip_connections >= 2)
                .then(|| b.conv(&mut rng, g, "seg.skip8", (c8, d), 1, 1));
            let fine = config.stem_channels;
            let plan = [(d, d), (d, d), (d, fine), (fine, fine), (fine, config.seg_classes)];
            let stages = plan
                .iter()
                .enumerate()
                .map(|(i, &io)| b.conv(&mut rng, g, &format!("seg.up{}", i + 1), io, 3, 1))
                .collect();
            SegDecoder {
                score,
                stages,
                skip16,
                skip8,
            }
        });

        let det = config.tasks.det.then(|| {
            let g = ParamGroup::Detection;
            let mut rng = b.rng(g);
            let h = config.det_hidden_channels;
            HeadDecoder {
                hidden: b.conv(&mut rng, g, "det.hidden", (c32, h), 3, 1),
                out: b.conv(&mut rng, g, "det.out", (h, config.det_channels()), 1, 1),
            }
        });

        let soil = config.tasks.soil.then(|| {
            let g = ParamGroup::Soiling;
            let mut rng = b.rng(g);
            let h = config.soil_hidden_channels;
            HeadDecoder {
                hidden: b.conv(&mut rng, g, "soil.hidden", (c32, h), 1, 1),
                out: b.conv(&mut rng, g, "soil.out", (h, SOIL_OUT_CHANNELS), 1, 1),
            }
        });

        Ok(Network {
            config,
            params: b.params,
            infos: b.infos,
            encoder,
            seg,
            det,
            soil,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_infos(&self) -> &[ParamInfo] {
        &self.infos
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Index of the kernel of the last encoder convolution.
    pub fn last_shared_layer(&self) -> usize {
        self.encoder.blocks.last().expect("four stages").conv2.kernel
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            infos: self.infos.clone(),
            encoder: self.encoder.clone(),
            seg: self.seg.clone(),
            det: self.det,
            soil: self.soil,
        }
    }

    /// Replaces all parameter values, keeping shapes.
    pub fn load_values(&mut self, values: &[Vec<T>]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Invalid(format!(
                "expected {} parameter tensors, got {}",
                self.params.len(),
                values.len()
            )));
        }
        for ((p, v), info) in self.params.iter_mut().zip(values).zip(&self.infos) {
            if p.len() != v.len() {
                return Err(Error::Invalid(format!(
                    "{}: expected {} values, got {}",
                    info.name,
                    p.len(),
                    v.len()
                )));
            }
            p.values_mut().copy_from_slice(v);
        }
        Ok(())
    }

    fn check_image(&self, image: &Tensor<T>) -> Result<()> {
        let expect = [3, self.config.input_height, self.config.input_width];
        if image.shape() != expect {
            return Err(Error::Invalid(format!(
                "image shape {:?} does not match network input {:?}",
                image.shape(),
                expect
            )));
        }
        if !image.is_finite() {
            return Err(Error::Invalid("image contains non-finite values".into()));
        }
        Ok(())
    }

    /// Records the parameters and one forward pass on `tape`.
    pub fn record(
        &self,
        tape: &mut Tape<T>,
        image: &Tensor<T>,
        with_grad: bool,
    ) -> Result<(Vec<Var>, OutputVars)> {
        self.check_image(image)?;
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| {
                let mut t = p.clone();
                t.requires_grad = with_grad;
                tape.leaf(t)
            })
            .collect();
        let x = tape.leaf(image.clone());
        let outputs = self.record_forward(tape, &params, x)?;
        Ok((params, outputs))
    }

    fn record_forward(&self, tape: &mut Tape<T>, p: &[Var], image: Var) -> Result<OutputVars> {
        let conv = |tape: &mut Tape<T>, layer: &ConvLayer, x: Var| {
            tape.conv2d(x, p[layer.kernel], p[layer.bias], layer.stride, layer.padding())
        };

        let stem = conv(tape, &self.encoder.stem, image)?;
        let mut x = tape.relu(stem);
        let mut features = Vec::with_capacity(4);
        for block in &self.encoder.blocks {
            let y = conv(tape, &block.conv1, x)?;
            let y = tape.relu(y);
            let y = conv(tape, &block.conv2, y)?;
            let s = conv(tape, &block.shortcut, x)?;
            let sum = tape.add(y, s)?;
            x = tape.relu(sum);
            features.push(x);
        }
        let (f8, f16, f32) = (features[1], features[2], features[3]);

        let seg_logits = match &self.seg {
            Some(seg) => {
                let mut y = conv(tape, &seg.score, f32)?;
                let last = seg.stages.len() - 1;
                for (i, stage) in seg.stages.iter().enumerate() {
                    y = tape.upsample_nearest2x(y)?;
                    y = conv(tape, stage, y)?;
                    let skip = match i {
                        0 => seg.skip16.as_ref().map(|l| (l, f16)),
                        1 => seg.skip8.as_ref().map(|l| (l, f8)),
                        _ => None,
                    };
                    if let Some((layer, feature)) = skip {
                        let s = conv(tape, layer, feature)?;
                        y = tape.add(y, s)?;
                    }
                    if i < last {
                        y = tape.relu(y);
                    }
                }
                Some(y)
            }
            None => None,
        };

        let det_grid = match &self.det {
            Some(det) => {
                let h = conv(tape, &det.hidden, f32)?;
                let h = tape.relu(h);
                Some(conv(tape, &det.out, h)?)
            }
            None => None,
        };

        let (soiling_grid, soiling_indicators) = match &self.soil {
            Some(soil) => {
                let (tw, th) = self.config.tile_size();
                let pooled = tape.avg_pool(f32, th / ENCODER_STRIDE, tw / ENCODER_STRIDE)?;
                let h = conv(tape, &soil.hidden, pooled)?;
                let h = tape.relu(h);
                let out = conv(tape, &soil.out, h)?;
                let grid = tape.slice_leading(out, 0, SoilClass::COUNT)?;
                let scores = tape.slice_leading(out, SoilClass::COUNT, 2)?;
                (Some(grid), Some(tape.max_spatial(scores)?))
            }
            None => (None, None),
        };

        Ok(OutputVars {
            seg_logits,
            det_grid,
            soiling_grid,
            soiling_indicators,
        })
    }

    pub fn forward(&self, image: &Tensor<T>) -> Result<NetworkOutputs<T>> {
        let mut tape = Tape::new();
        let (_, out) = self.record(&mut tape, image, false)?;
        let take = |v: Option<Var>| v.map(|v| tape.value(v).clone());
        Ok(NetworkOutputs {
            seg_logits: take(out.seg_logits),
            det_grid: take(out.det_grid),
            soiling_grid: take(out.soiling_grid),
            soiling_indicators: take(out.soiling_indicators),
        })
    }

    /// Analytic multiply-accumulate count of one forward pass (convolutions only).
    pub fn forward_macs(&self) -> u64 {
        let (h, w) = (self.config.input_height, self.config.input_width);
        let mut total = 0;
        let (m, mut fh, mut fw) = self.encoder.stem.cost(h, w);
        total += m;
        let mut sizes = Vec::new();
        for block in &self.encoder.blocks {
            let (m1, oh, ow) = block.conv1.cost(fh, fw);
            let (m2, _, _) = block.conv2.cost(oh, ow);
            let (m3, _, _) = block.shortcut.cost(fh, fw);
            total += m1 + m2 + m3;
            fh = oh;
            fw = ow;
            sizes.push((oh, ow));
        }
        let (h32, w32) = sizes[3];
        if let Some(seg) = &self.seg {
            let (m, mut sh, mut sw) = seg.score.cost(h32, w32);
            total += m;
            for stage in &seg.stages {
                sh *= 2;
                sw *= 2;
                total += stage.cost(sh, sw).0;
            }
            if let Some(l) = &seg.skip16 {
                total += l.cost(sizes[2].0, sizes[2].1).0;
            }
            if let Some(l) = &seg.skip8 {
                total += l.cost(sizes[1].0, sizes[1].1).0;
            }
        }
        if let Some(det) = &self.det {
            total += det.hidden.cost(h32, w32).0 + det.out.cost(h32, w32).0;
        }
        if let Some(soil) = &self.soil {
            let (cols, rows) = self.config.soiling_tiles;
            total += soil.hidden.cost(rows, cols).0 + soil.out.cost(rows, cols).0;
        }
        total
    }
}
