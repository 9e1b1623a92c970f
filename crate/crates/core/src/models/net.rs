use autograd::{Conv2dSpec, Float, Graph, ParamStore, PoolSpec, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Family, ModelConfig, ATTENTION_HEADS, POLYPHONY_HIDDEN, TRANSFORMER_LAYERS};
use super::layers::{bilstm, positional_encoding, Builder, Conv, Ctx, DoubleConv, EncoderLayer, Linear, LstmDirection, Mode, Norm};
use crate::datasets::{N_PITCHES, N_POLY_CLASSES, PATCH_FRAMES};
use crate::error::{invalid, Error, Result};
use crate::signal::{HARMONICS, N_BINS};

const CHANNELS_IN: usize = HARMONICS.len();
const PREFILTER_KERNEL: usize = 15;
const DEEP_EXTRA_LAYERS: usize = 4;
/// Kernel sizes of the U-net input block and the four downsampling blocks;
/// the upsampling blocks mirror them.
const UNET_KERNELS: [usize; 4] = [15, 9, 5, 3];
const POOL_SPAN: usize = 13;

/// Spatial extent after each of the four 2x2 poolings of a `75 x 216` patch.
const fn pooled(n: usize, times: u32) -> usize {
    n >> times
}

#[derive(Clone, Debug)]
enum Sequence {
    Attention(Vec<EncoderLayer>),
    Blstm { layers: Vec<[LstmDirection; 2]>, project: Option<Linear> },
}

#[derive(Clone, Debug)]
struct UnetLayout {
    inc: DoubleConv,
    downs: [DoubleConv; 4],
    ups: [DoubleConv; 4],
    skip_attention: Option<Vec<EncoderLayer>>,
    bottleneck: Option<Sequence>,
    polyphony: Option<(Conv, Conv)>,
}

#[derive(Clone, Debug)]
enum Front {
    Prefilter { first: Conv, extra: Vec<Conv>, residual: bool },
    Unet(Box<UnetLayout>),
}

#[derive(Clone, Debug)]
struct Layout {
    input_norm: Norm,
    front: Front,
    back: [Conv; 4],
}

/// Graph outputs of one forward pass. Pitch logits feed a sigmoid.
pub struct Forward<'g, F: Float> {
    pub pitch_logits: Var<'g, F>,
    pub polyphony_logits: Option<Var<'g, F>>,
}

/// Plain-value model output for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    pub batch: usize,
    /// `[batch, 72]` sigmoid activations.
    pub pitch_activity: Vec<f32>,
    /// `[batch, 24]` logits, PUnet only.
    pub polyphony_logits: Option<Vec<f32>>,
}

impl ModelOutput {
    pub fn pitch_row(&self, i: usize) -> &[f32] {
        &self.pitch_activity[i * N_PITCHES..(i + 1) * N_PITCHES]
    }
}

/// A network of one family with its parameters.
#[derive(Clone, Debug)]
pub struct Model<F: Float = f32> {
    config: ModelConfig,
    store: ParamStore<F>,
    layout: Layout,
}

pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model<f32>> {
    Model::build(config, seed)
}

pub fn count_params<F: Float>(model: &Model<F>) -> usize {
    model.store.num_trainable()
}

impl<F: Float> Model<F> {
    /// Validates the configuration, then allocates and initialises weights
    /// from `seed`.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder { store: &mut store, rng: &mut rng };
        let [n0, n1, n2, n3] = config.channels;
        let input_norm = b.layer_norm("input_norm", &[CHANNELS_IN * N_BINS]);
        let front = if config.family.is_unet() {
            Front::Unet(Box::new(build_unet(&mut b, config)))
        } else {
            let k = (PREFILTER_KERNEL, PREFILTER_KERNEL);
            let same = Conv2dSpec::same(k.0, k.1);
            let first = b.conv("prefilter.0", CHANNELS_IN, n0, k, true, same);
            let extra = match config.family {
                Family::Dcnn | Family::Drcnn => {
                    (1..=DEEP_EXTRA_LAYERS).map(|i| b.conv(&format!("prefilter.{i}"), n0, n0, k, true, same)).collect()
                }
                _ => Vec::new(),
            };
            Front::Prefilter { first, extra, residual: config.family == Family::Drcnn }
        };
        let back = [
            b.conv("back.pitch", n0, n1, (3, 3), true, Conv2dSpec { stride: (1, 3), padding: (1, 0) }),
            b.conv("back.time", n1, n2, (PATCH_FRAMES, 1), true, Conv2dSpec::valid()),
            b.conv("back.mix", n2, n3, (1, 1), true, Conv2dSpec::valid()),
            b.conv("back.out", n3, 1, (1, 1), true, Conv2dSpec::valid()),
        ];
        Ok(Self { config: config.clone(), store, layout: Layout { input_norm, front, back } })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore<F> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.store
    }

    /// Replaces all tensors, e.g. with an earlier snapshot of [`Self::store`].
    pub fn restore(&mut self, store: ParamStore<F>) -> Result<()> {
        if store.len() != self.store.len() || store.ids().any(|id| store.name(id) != self.store.name(id)) {
            return Err(invalid("parameter snapshot does not belong to this model"));
        }
        self.store = store;
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.store.num_trainable()
    }

    pub fn cast<G: Float>(&self) -> Model<G> {
        Model { config: self.config.clone(), store: self.store.cast(), layout: self.layout.clone() }
    }

    fn check_input(shape: &[usize]) -> Result<()> {
        let expected = [shape.first().copied().unwrap_or(0).max(1), CHANNELS_IN, PATCH_FRAMES, N_BINS];
        if shape.len() != 4 || shape[0] == 0 || shape[1..] != expected[1..] {
            return Err(Error::Shape { expected: expected.to_vec(), actual: shape.to_vec() });
        }
        Ok(())
    }

    /// Records a forward pass of `[batch, 6, 75, 216]` input on `g`.
    pub fn forward_graph<'g, R: Rng>(
        &self,
        g: &'g Graph<F>,
        input: Var<'g, F>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Forward<'g, F>> {
        Self::check_input(&input.shape())?;
        let mut cx = Ctx { g, store: &self.store, mode, rng };
        let slope = self.config.leaky_slope;
        let drop = self.config.dropout;
        let b = input.dim(0);

        // Layer norm over harmonics x bins of every frame.
        let x = input.permute(&[0, 2, 1, 3]);
        let x = self.layout.input_norm.apply(&cx, x).permute(&[0, 2, 1, 3]);

        let mut polyphony_logits = None;
        let x = match &self.layout.front {
            Front::Prefilter { first, extra, residual } => {
                let y = first.apply(&cx, x).leaky_relu(slope);
                let mut x = cx.dropout(y, drop);
                for conv in extra {
                    let y = conv.apply(&cx, x).leaky_relu(slope);
                    let y = cx.dropout(y, drop);
                    x = if *residual { x.add(y) } else { y };
                }
                x
            }
            Front::Unet(u) => {
                let (x, poly) = self.unet_forward(&mut cx, u, x)?;
                polyphony_logits = poly;
                x
            }
        };

        let [pitch, time, mix, out] = &self.layout.back;
        let x = pitch.apply(&cx, x).leaky_relu(slope);
        let x = x.max_pool2d(PoolSpec { kernel: (POOL_SPAN, 1), stride: (1, 1), padding: (POOL_SPAN / 2, 0) });
        let x = cx.dropout(x, drop);
        let x = time.apply(&cx, x).leaky_relu(slope);
        let x = cx.dropout(x, drop);
        let x = mix.apply(&cx, x).leaky_relu(slope);
        let x = cx.dropout(x, drop);
        let pitch_logits = out.apply(&cx, x).reshape(&[b, N_PITCHES]);
        Ok(Forward { pitch_logits, polyphony_logits })
    }

    fn unet_forward<'g, R: Rng>(
        &self,
        cx: &mut Ctx<'g, '_, F, R>,
        u: &UnetLayout,
        x: Var<'g, F>,
    ) -> Result<(Var<'g, F>, Option<Var<'g, F>>)> {
        let x1 = u.inc.apply(cx, x);
        let x2 = u.downs[0].down(cx, x1);
        let x3 = u.downs[1].down(cx, x2);
        let mut x4 = u.downs[2].down(cx, x3);
        if let Some(layers) = &u.skip_attention {
            let tokens = to_tokens(x4);
            let y = self.attention_stack(cx, layers, tokens, true);
            x4 = x4.add(from_tokens(y, x4.dim(2), x4.dim(3)));
        }
        let mut x5 = u.downs[3].down(cx, x4);
        match &u.bottleneck {
            Some(Sequence::Attention(layers)) => {
                let y = self.attention_stack(cx, layers, to_tokens(x5), true);
                x5 = x5.add(from_tokens(y, x5.dim(2), x5.dim(3)));
            }
            Some(Sequence::Blstm { layers, project }) => {
                let y = blstm_stack(cx, layers, project.as_ref(), x5);
                x5 = x5.add(y);
            }
            None => {}
        }
        let poly = u.polyphony.as_ref().map(|(hidden, out)| {
            let h = hidden.apply(cx, x5).leaky_relu(self.config.leaky_slope);
            let h = cx.dropout(h, self.config.dropout);
            out.apply(cx, h).global_avg_pool2d()
        });
        let y = u.ups[0].up(cx, x5, x4);
        let y = u.ups[1].up(cx, y, x3);
        let y = u.ups[2].up(cx, y, x2);
        let y = u.ups[3].up(cx, y, x1);
        Ok((y, poly))
    }

    fn attention_stack<'g, R: Rng>(
        &self,
        cx: &mut Ctx<'g, '_, F, R>,
        layers: &[EncoderLayer],
        tokens: Var<'g, F>,
        positional: bool,
    ) -> Var<'g, F> {
        let (b, l, d) = (tokens.dim(0), tokens.dim(1), tokens.dim(2));
        let mut x = tokens;
        if positional {
            let pe = positional_encoding::<F>(l, d);
            let tiled = Tensor::from_fn(&[b, l, d], |i| pe.data()[i % (l * d)]);
            x = x.add(cx.g.constant(tiled));
        }
        for layer in layers {
            x = layer.apply(cx, x, ATTENTION_HEADS, self.config.dropout);
        }
        x
    }

    /// Runs the bottleneck sequence model (attention or BLSTM) alone on
    /// `[batch, length, d]` tokens, optionally adding positional encodings.
    /// BLSTM models read the tokens as `[batch, time, features]`.
    pub fn bottleneck_sequence<'g, R: Rng>(
        &self,
        g: &'g Graph<F>,
        tokens: Var<'g, F>,
        positional: bool,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var<'g, F>> {
        let Front::Unet(u) = &self.layout.front else {
            return Err(invalid(format!("{} has no bottleneck sequence model", self.config.family)));
        };
        let mut cx = Ctx { g, store: &self.store, mode, rng };
        match &u.bottleneck {
            Some(Sequence::Attention(layers)) => Ok(self.attention_stack(&mut cx, layers, tokens, positional)),
            Some(Sequence::Blstm { layers, .. }) => {
                let mut x = tokens;
                for dirs in layers {
                    x = bilstm(&cx, dirs, x);
                }
                Ok(x)
            }
            None => Err(invalid(format!("{} has no bottleneck sequence model", self.config.family))),
        }
    }

    /// Evaluation-mode prediction for a `[batch, 6, 75, 216]` tensor.
    pub fn predict(&self, batch: &Tensor<F>) -> Result<ModelOutput> {
        Self::check_input(batch.shape())?;
        if !batch.is_finite() {
            return Err(invalid("input contains non-finite values"));
        }
        let g = Graph::new();
        let x = g.constant(batch.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward_graph(&g, x, Mode::Eval, &mut rng)?;
        let pitch = out.pitch_logits.sigmoid().value();
        Ok(ModelOutput {
            batch: batch.dim(0),
            pitch_activity: pitch.data().iter().map(|v| v.as_f64() as f32).collect(),
            polyphony_logits: out.polyphony_logits.map(|p| p.value().data().iter().map(|v| v.as_f64() as f32).collect()),
        })
    }
}

/// `[b, c, h, w] -> [b, h * w, c]`.
fn to_tokens<F: Float>(x: Var<'_, F>) -> Var<'_, F> {
    let (b, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    x.reshape(&[b, c, h * w]).permute(&[0, 2, 1])
}

fn from_tokens<F: Float>(t: Var<'_, F>, h: usize, w: usize) -> Var<'_, F> {
    let (b, c) = (t.dim(0), t.dim(2));
    t.permute(&[0, 2, 1]).reshape(&[b, c, h, w])
}

/// BLSTM over the time axis of `[b, c, t, f]`, with channels x frequency as
/// features; the result has the input's shape.
fn blstm_stack<'g, F: Float, R: Rng>(
    cx: &Ctx<'g, '_, F, R>,
    layers: &[[LstmDirection; 2]],
    project: Option<&Linear>,
    x: Var<'g, F>,
) -> Var<'g, F> {
    let (b, c, t, f) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let mut s = x.permute(&[0, 2, 1, 3]).reshape(&[b, t, c * f]);
    for dirs in layers {
        s = bilstm(cx, dirs, s);
    }
    if let Some(p) = project {
        s = p.apply(cx, s);
    }
    s.reshape(&[b, t, c, f]).permute(&[0, 2, 1, 3])
}

fn build_unet<F: Float, R: Rng>(b: &mut Builder<'_, F, R>, config: &ModelConfig) -> UnetLayout {
    let g = config.gamma();
    let n0 = config.channels[0];
    let [k0, k1, k2, k3] = UNET_KERNELS;
    let inc = b.double_conv("unet.inc", CHANNELS_IN, g, g, k0);
    let downs = [
        b.double_conv("unet.down1", g, 2 * g, 2 * g, k0),
        b.double_conv("unet.down2", 2 * g, 4 * g, 4 * g, k1),
        b.double_conv("unet.down3", 4 * g, 8 * g, 8 * g, k2),
        b.double_conv("unet.down4", 8 * g, 8 * g, 8 * g, k3),
    ];
    let ups = [
        b.double_conv("unet.up1", 16 * g, 8 * g, 4 * g, k3),
        b.double_conv("unet.up2", 8 * g, 4 * g, 2 * g, k2),
        b.double_conv("unet.up3", 4 * g, 2 * g, g, k1),
        b.double_conv("unet.up4", 2 * g, g, n0, k0),
    ];
    let d = 8 * g;
    let lambda = config.lambda();
    let encoder = |b: &mut Builder<'_, F, R>, prefix: &str| {
        (0..TRANSFORMER_LAYERS).map(|i| b.encoder_layer(&format!("{prefix}.{i}"), d, lambda)).collect::<Vec<_>>()
    };
    let skip_attention = (config.family == Family::SaUsnet).then(|| encoder(b, "unet.skip_attention"));
    let bottleneck = match config.family {
        Family::SaUnet | Family::SaUsnet => Some(Sequence::Attention(encoder(b, "unet.attention"))),
        Family::BlUnet => {
            let features = d * pooled(N_BINS, 4);
            let mut input = features;
            let layers = (0..config.blstm_layers)
                .map(|i| {
                    let dirs = [
                        b.lstm_direction(&format!("unet.blstm.{i}.forward"), input, lambda),
                        b.lstm_direction(&format!("unet.blstm.{i}.backward"), input, lambda),
                    ];
                    input = 2 * lambda;
                    dirs
                })
                .collect();
            let project = (2 * lambda != features).then(|| b.linear("unet.blstm.project", 2 * lambda, features));
            Some(Sequence::Blstm { layers, project })
        }
        _ => None,
    };
    let polyphony = (config.family == Family::PUnet).then(|| {
        (
            b.conv("unet.polyphony.hidden", d, POLYPHONY_HIDDEN, (3, 3), true, Conv2dSpec::same(3, 3)),
            b.conv("unet.polyphony.out", POLYPHONY_HIDDEN, N_POLY_CLASSES, (1, 1), true, Conv2dSpec::valid()),
        )
    });
    UnetLayout { inc, downs, ups, skip_attention, bottleneck, polyphony }
}

/// Bottleneck grid of the U-net families: `(frames, bins)`.
pub const BOTTLENECK: (usize, usize) = (pooled(PATCH_FRAMES, 4), pooled(N_BINS, 4));

/// Stacks per-example patches into a `[n, 6, 75, 216]` tensor.
pub fn stack_inputs<F: Float>(inputs: &[&[f32]]) -> Result<Tensor<F>> {
    let len = CHANNELS_IN * PATCH_FRAMES * N_BINS;
    if inputs.is_empty() || inputs.iter().any(|x| x.len() != len) {
        return Err(invalid(format!("every input must hold {len} values")));
    }
    let data = inputs.iter().flat_map(|x| x.iter().map(|&v| F::of(v as f64))).collect();
    Ok(Tensor::from_vec(&[inputs.len(), CHANNELS_IN, PATCH_FRAMES, N_BINS], data))
}
