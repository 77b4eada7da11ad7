use crate::augment::Image;
use crate::error::{Error, Result};
use crate::netarch::DetectorConfig;
use crate::tensorcore::{Graph, Parameter, RngStream, Tensor, Var};

/// Which head sits on the pooled backbone features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    /// Two fully-connected layers with a relu between: contrastive latent.
    Projection,
    /// Single logit for real-vs-synthetic classification.
    Classifier,
}

#[derive(Debug, Clone, Copy)]
struct ConvLayer {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct NormLayer {
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone, Copy)]
struct AffineLayer {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Block {
    conv1: ConvLayer,
    norm1: NormLayer,
    conv2: ConvLayer,
    norm2: NormLayer,
    /// 1x1 projection on the skip path when the channel count changes.
    proj: Option<ConvLayer>,
}

#[derive(Debug, Clone)]
enum Head {
    Projection { fc1: AffineLayer, fc2: AffineLayer },
    Classifier { fc: AffineLayer },
}

/// The detector: stride-1 3x3 stem, residual stages with per-channel
/// learned scale/shift normalization, global average pooling, and a
/// swappable head. Inference is defined for any input at or above
/// [`DetectorConfig::min_input_size`]; nothing in the layer graph resamples
/// the input.
pub struct DetectorNetwork {
    config: DetectorConfig,
    params: Vec<Parameter>,
    stem: ConvLayer,
    stem_norm: NormLayer,
    stages: Vec<Vec<Block>>,
    head: Head,
}

struct Builder {
    params: Vec<Parameter>,
    rng: RngStream,
}

impl Builder {
    fn he_tensor(&self, name: &str, shape: &[usize], fan_in: usize) -> Tensor {
        let mut rng = self.rng.child(name);
        let std = (2.0 / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| std * rng.normal()).collect();
        Tensor::new(shape.to_vec(), data).expect("finite init")
    }

    fn push(&mut self, name: String, value: Tensor) -> usize {
        self.params.push(Parameter::new(name, value));
        self.params.len() - 1
    }

    fn conv(&mut self, name: &str, out_c: usize, in_c: usize, k: usize) -> ConvLayer {
        let wname = format!("{name}.w");
        let w = self.he_tensor(&wname, &[out_c, in_c, k, k], in_c * k * k);
        let w = self.push(wname, w);
        let b = self.push(format!("{name}.b"), Tensor::zeros(&[out_c]));
        ConvLayer { w, b }
    }

    fn norm(&mut self, name: &str, c: usize) -> NormLayer {
        let gamma = self.push(format!("{name}.gamma"), Tensor::full(&[c], 1.0));
        let beta = self.push(format!("{name}.beta"), Tensor::zeros(&[c]));
        NormLayer { gamma, beta }
    }

    fn affine(&mut self, name: &str, out: usize, inp: usize) -> AffineLayer {
        let wname = format!("{name}.w");
        let w = self.he_tensor(&wname, &[out, inp], inp);
        let w = self.push(wname, w);
        let b = self.push(format!("{name}.b"), Tensor::zeros(&[out]));
        AffineLayer { w, b }
    }
}

/// Deterministic He-initialized network from a validated config. Every
/// parameter is seeded by `rng.child(<parameter name>)`, so initialization
/// is independent of construction order.
pub fn build_detector(config: &DetectorConfig, rng: &RngStream) -> Result<DetectorNetwork> {
    config.validate()?;
    let mut b = Builder {
        params: Vec::new(),
        rng: rng.clone(),
    };
    let stem = b.conv("stem.conv", config.stem_channels, 3, 3);
    let stem_norm = b.norm("stem.norm", config.stem_channels);
    let mut stages = Vec::new();
    let mut in_c = config.stem_channels;
    for (s, (&width, &nblocks)) in config
        .block_widths
        .iter()
        .zip(&config.blocks_per_stage)
        .enumerate()
    {
        let mut blocks = Vec::new();
        for blk in 0..nblocks {
            let name = format!("stage{s}.block{blk}");
            let conv1 = b.conv(&format!("{name}.conv1"), width, in_c, 3);
            let norm1 = b.norm(&format!("{name}.norm1"), width);
            let conv2 = b.conv(&format!("{name}.conv2"), width, width, 3);
            let norm2 = b.norm(&format!("{name}.norm2"), width);
            let proj = if in_c != width {
                Some(b.conv(&format!("{name}.proj"), width, in_c, 1))
            } else {
                None
            };
            blocks.push(Block {
                conv1,
                norm1,
                conv2,
                norm2,
                proj,
            });
            in_c = width;
        }
        stages.push(blocks);
    }
    let head = build_head(&mut b, config, HeadKind::Projection, in_c);
    Ok(DetectorNetwork {
        config: config.clone(),
        params: b.params,
        stem,
        stem_norm,
        stages,
        head,
    })
}

fn build_head(b: &mut Builder, config: &DetectorConfig, kind: HeadKind, feat_c: usize) -> Head {
    match kind {
        HeadKind::Projection => Head::Projection {
            fc1: b.affine("head.proj.fc1", config.projection_hidden, feat_c),
            fc2: b.affine(
                "head.proj.fc2",
                config.projection_latent,
                config.projection_hidden,
            ),
        },
        HeadKind::Classifier => Head::Classifier {
            fc: b.affine("head.cls.fc", 1, feat_c),
        },
    }
}

impl DetectorNetwork {
    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn head_kind(&self) -> HeadKind {
        match self.head {
            Head::Projection { .. } => HeadKind::Projection,
            Head::Classifier { .. } => HeadKind::Classifier,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn feature_channels(&self) -> usize {
        *self.config.block_widths.last().expect("validated config")
    }

    pub fn min_input_size(&self) -> usize {
        self.config.min_input_size()
    }

    pub fn reset_grads(&mut self) {
        self.params.iter_mut().for_each(Parameter::reset_grad);
    }

    /// Add per-parameter gradients from a finished forward/backward pass.
    pub fn accumulate_grads(&mut self, grads: &[Option<Tensor>]) {
        debug_assert_eq!(grads.len(), self.params.len());
        for (p, g) in self.params.iter_mut().zip(grads) {
            if let Some(g) = g {
                p.grad.add_assign(g);
            }
        }
    }

    /// Replace the head with a freshly initialized one of the other kind.
    /// Backbone parameter values are preserved bit-exact; the whole network
    /// (stem included) stays trainable.
    pub fn swap_head(mut self, kind: HeadKind, rng: &RngStream) -> Result<DetectorNetwork> {
        if self.head_kind() == kind {
            return Err(Error::Contract(
                "swap_head: network already has this head kind".into(),
            ));
        }
        let first_head = self
            .params
            .iter()
            .position(|p| p.name.starts_with("head."))
            .expect("network always has a head");
        self.params.truncate(first_head);
        let feat_c = self.feature_channels();
        let mut b = Builder {
            params: std::mem::take(&mut self.params),
            rng: rng.clone(),
        };
        self.head = build_head(&mut b, &self.config, kind, feat_c);
        self.params = b.params;
        Ok(self)
    }

    /// Begin a recorded forward pass. One pass may evaluate several images
    /// (a whole contrastive batch) before a single backward call.
    pub fn forward(&self) -> ForwardPass<'_> {
        let mut graph = Graph::new();
        let param_vars = self
            .params
            .iter()
            .map(|p| graph.leaf(p.value.clone()))
            .collect();
        ForwardPass {
            net: self,
            graph,
            param_vars,
        }
    }

    /// Contrastive latent for one image (projection head required).
    pub fn embed(&self, img: &Image) -> Result<Tensor> {
        let mut fp = self.forward();
        let v = fp.embed(img)?;
        Ok(fp.graph.value(v).clone())
    }

    /// Detection score in [0,1] for an image at its native resolution.
    /// Score above 0.5 means "synthetic" (fake = 1 convention).
    pub fn classify(&self, img: &Image) -> Result<f64> {
        let mut fp = self.forward();
        let logit = fp.classify_logit(img)?;
        let score = fp.graph.sigmoid(logit);
        Ok(fp.graph.value(score).item())
    }
}

/// A single recorded forward pass over a [`DetectorNetwork`].
pub struct ForwardPass<'n> {
    net: &'n DetectorNetwork,
    graph: Graph,
    param_vars: Vec<Var>,
}

impl<'n> ForwardPass<'n> {
    pub fn graph(&mut self) -> &mut Graph {
        &mut self.graph
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.graph.value(v)
    }

    fn pv(&self, idx: usize) -> Var {
        self.param_vars[idx]
    }

    /// "Same" convolution via reflect padding, so constant inputs stay
    /// constant through the backbone (this is what makes pooled features of
    /// constant images resolution-invariant).
    fn conv(&mut self, x: Var, layer: ConvLayer, stride: usize, pad: usize) -> Result<Var> {
        let (w, b) = (self.pv(layer.w), self.pv(layer.b));
        let x = self.graph.reflect_pad(x, pad)?;
        self.graph.conv2d(x, w, b, stride, 0)
    }

    fn norm(&mut self, x: Var, layer: NormLayer) -> Result<Var> {
        let (g, b) = (self.pv(layer.gamma), self.pv(layer.beta));
        self.graph.channel_affine(x, g, b)
    }

    fn affine(&mut self, x: Var, layer: AffineLayer) -> Result<Var> {
        let (w, b) = (self.pv(layer.w), self.pv(layer.b));
        self.graph.affine(x, w, b)
    }

    /// Backbone features after global average pooling: a C-vector.
    pub fn features(&mut self, img: &Image) -> Result<Var> {
        let min = self.net.min_input_size();
        if img.height() < min || img.width() < min {
            return Err(Error::InputTooSmall {
                height: img.height(),
                width: img.width(),
                minimum: min,
            });
        }
        // Per-channel mean subtraction: scene brightness is a nuisance
        // variable that would otherwise dominate the pooled features.
        let mut t = img.to_tensor();
        let hw = img.height() * img.width();
        let data = t.data_mut();
        for c in 0..3 {
            let plane = &mut data[c * hw..(c + 1) * hw];
            let mean = plane.iter().sum::<f64>() / hw as f64;
            plane.iter_mut().for_each(|v| *v -= mean);
        }
        let mut x = self.graph.leaf(t);
        x = self.conv(x, self.net.stem, self.net.config.stem_stride, 1)?;
        x = self.norm(x, self.net.stem_norm)?;
        x = self.graph.relu(x);
        for (s, blocks) in self.net.stages.iter().enumerate() {
            for block in blocks {
                let block = block.clone();
                let skip = match block.proj {
                    Some(proj) => self.conv(x, proj, 1, 0)?,
                    None => x,
                };
                let mut y = self.conv(x, block.conv1, 1, 1)?;
                y = self.norm(y, block.norm1)?;
                y = self.graph.relu(y);
                y = self.conv(y, block.conv2, 1, 1)?;
                y = self.norm(y, block.norm2)?;
                y = self.graph.add(y, skip)?;
                x = self.graph.relu(y);
            }
            if self.net.config.downsample_after_stage[s] {
                x = self.graph.avg_pool2(x)?;
            }
        }
        self.graph.global_avg_pool(x)
    }

    /// Raw (unnormalized) contrastive latent; normalization happens inside
    /// similarity computations.
    pub fn embed(&mut self, img: &Image) -> Result<Var> {
        let Head::Projection { fc1, fc2 } = &self.net.head else {
            return Err(Error::Contract(
                "embed requires the projection head; call swap_head first".into(),
            ));
        };
        let (fc1, fc2) = (*fc1, *fc2);
        let feat = self.features(img)?;
        let h = self.affine(feat, fc1)?;
        let h = self.graph.relu(h);
        self.affine(h, fc2)
    }

    /// Classification logit (scalar); the score is sigmoid(logit).
    pub fn classify_logit(&mut self, img: &Image) -> Result<Var> {
        let Head::Classifier { fc } = &self.net.head else {
            return Err(Error::Contract(
                "classify requires the classifier head; call swap_head first".into(),
            ));
        };
        let fc = *fc;
        let feat = self.features(img)?;
        self.affine(feat, fc)
    }

    /// Reverse pass; returns per-parameter gradients aligned with
    /// `net.params()` (None where the loss does not reach a parameter).
    pub fn backward(&self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        let mut grads = self.graph.backward(loss)?;
        Ok(self
            .param_vars
            .iter()
            .map(|&v| grads.take(v))
            .collect())
    }
}
