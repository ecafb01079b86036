//! Magnitude-preserving U-Net noise predictor `eps(x, y_t, abar_t)`.
//!
//! The condition image and the noisy target are stacked with a constant
//! channel and encoded by residual blocks (pixel-normalized main path,
//! two 3x3 convolutions behind MP-SiLU on the residual branch, per-channel
//! modulation from the noise-level embedding). Downsampling is 2x2 averaging,
//! upsampling is nearest-neighbor; decoder blocks take MP-concatenated skip
//! connections. Self-attention follows the residual branch at the configured
//! levels. All kernels are used through forced weight normalization.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::mp;
use super::params::{normalize_weights, Gradients, ParamGroup, ParamKind};
use super::tape::{NodeId, Tape};
use crate::{rng, Error, Image, Result, Tensor};

const RES_BALANCE: f64 = 0.3;
const ATTN_BALANCE: f64 = 0.3;
const CONCAT_BALANCE: f64 = 0.5;
const CLIP_ACT: f64 = 256.0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct DenoiserConfig {
    /// Number of resolution levels.
    pub levels: usize,
    pub base_channels: usize,
    pub channel_mult: Vec<usize>,
    pub blocks_per_level: usize,
    /// 1-based levels (1 = full resolution) whose blocks carry self-attention.
    pub attention_levels: Vec<usize>,
    pub attention_heads: usize,
    /// Number of Fourier features of the noise level.
    pub embed_dim: usize,
    /// Image channels entering the network: condition plus noisy target.
    pub input_channels: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            base_channels: 16,
            channel_mult: vec![1, 2, 4],
            blocks_per_level: 2,
            attention_levels: vec![3],
            attention_heads: 4,
            embed_dim: 64,
            input_channels: 2,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::config("denoiser needs at least one level"));
        }
        if self.channel_mult.len() != self.levels {
            return Err(Error::config("channel_mult must list one multiplier per level"));
        }
        if self.base_channels == 0 || self.channel_mult.contains(&0) {
            return Err(Error::config("channel counts must be positive"));
        }
        if self.blocks_per_level == 0 {
            return Err(Error::config("blocks_per_level must be positive"));
        }
        if self.embed_dim == 0 {
            return Err(Error::config("embed_dim must be positive"));
        }
        if self.input_channels != 2 {
            return Err(Error::config("input_channels must be 2 (condition + noisy target)"));
        }
        for &l in &self.attention_levels {
            if l == 0 || l > self.levels {
                return Err(Error::config(format!("attention level {l} outside 1..={}", self.levels)));
            }
            if self.attention_heads == 0 || self.level_channels(l - 1) % self.attention_heads != 0 {
                return Err(Error::config(format!(
                    "channels at attention level {l} not divisible by {} heads",
                    self.attention_heads
                )));
            }
        }
        Ok(())
    }

    /// Channels of 0-based level `level`.
    pub fn level_channels(&self, level: usize) -> usize {
        self.base_channels * self.channel_mult[level]
    }

    pub fn embed_channels(&self) -> usize {
        4 * self.base_channels
    }

    /// Spatial sizes must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << (self.levels - 1)
    }

    fn has_attention(&self, level: usize) -> bool {
        self.attention_levels.contains(&(level + 1))
    }

    pub fn check_spatial(&self, width: usize, height: usize) -> Result<()> {
        let m = self.size_multiple();
        if width == 0 || height == 0 || width % m != 0 || height % m != 0 {
            return Err(Error::arg(format!(
                "spatial size {width}x{height} is not a positive multiple of {m}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flavor {
    Enc,
    Dec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Resample {
    Keep,
    Down,
    Up,
}

#[derive(Debug, Clone)]
struct Block {
    flavor: Flavor,
    resample: Resample,
    heads: usize,
    takes_skip: bool,
    conv_res0: usize,
    conv_res1: usize,
    emb_linear: usize,
    emb_gain: usize,
    conv_skip: Option<usize>,
    attn_qkv: Option<usize>,
    attn_proj: Option<usize>,
}

#[derive(Debug, Clone)]
struct Topology {
    emb_linear: usize,
    enc_conv: usize,
    encoder: Vec<Block>,
    decoder: Vec<Block>,
    out_conv: usize,
    out_gain: usize,
}

struct Builder {
    groups: Vec<ParamGroup>,
}

impl Builder {
    fn weight(&mut self, name: String, shape: Vec<usize>) -> usize {
        let len = shape.iter().product();
        self.groups.push(ParamGroup {
            name,
            shape,
            kind: ParamKind::Weight,
            data: vec![0.0; len],
        });
        self.groups.len() - 1
    }

    fn gain(&mut self, name: String, init: f64) -> usize {
        self.groups.push(ParamGroup {
            name,
            shape: vec![1],
            kind: ParamKind::Gain,
            data: vec![init],
        });
        self.groups.len() - 1
    }

    #[allow(clippy::too_many_arguments)]
    fn block(
        &mut self,
        name: &str,
        flavor: Flavor,
        resample: Resample,
        cin: usize,
        cout: usize,
        cemb: usize,
        heads: usize,
        takes_skip: bool,
    ) -> Block {
        // encoder blocks project to the new width before the residual branch
        let res_in = if flavor == Flavor::Enc { cout } else { cin };
        let conv_res0 = self.weight(format!("{name}.conv_res0"), vec![cout, res_in, 3, 3]);
        let conv_res1 = self.weight(format!("{name}.conv_res1"), vec![cout, cout, 3, 3]);
        let emb_linear = self.weight(format!("{name}.emb_linear"), vec![cout, cemb]);
        let emb_gain = self.gain(format!("{name}.emb_gain"), 0.0);
        let conv_skip =
            (cin != cout).then(|| self.weight(format!("{name}.conv_skip"), vec![cout, cin, 1, 1]));
        let (attn_qkv, attn_proj) = if heads > 0 {
            (
                Some(self.weight(format!("{name}.attn_qkv"), vec![3 * cout, cout, 1, 1])),
                Some(self.weight(format!("{name}.attn_proj"), vec![cout, cout, 1, 1])),
            )
        } else {
            (None, None)
        };
        Block {
            flavor,
            resample,
            heads,
            takes_skip,
            conv_res0,
            conv_res1,
            emb_linear,
            emb_gain,
            conv_skip,
            attn_qkv,
            attn_proj,
        }
    }
}

fn build_topology(cfg: &DenoiserConfig) -> (Topology, Vec<ParamGroup>) {
    let mut b = Builder { groups: Vec::new() };
    let cemb = cfg.embed_channels();
    let emb_linear = b.weight("emb.linear".into(), vec![cemb, cfg.embed_dim]);
    let c0 = cfg.level_channels(0);
    // condition, noisy target and a constant-one channel
    let enc_conv = b.weight("enc.conv".into(), vec![c0, cfg.input_channels + 1, 3, 3]);
    let heads_at = |level: usize| if cfg.has_attention(level) { cfg.attention_heads } else { 0 };

    let mut encoder = Vec::new();
    let mut skip_channels = vec![c0];
    let mut cout = c0;
    for level in 0..cfg.levels {
        if level > 0 {
            let blk = b.block(
                &format!("enc.l{}.down", level + 1),
                Flavor::Enc,
                Resample::Down,
                cout,
                cout,
                cemb,
                0,
                false,
            );
            encoder.push(blk);
            skip_channels.push(cout);
        }
        for idx in 0..cfg.blocks_per_level {
            let cin = cout;
            cout = cfg.level_channels(level);
            let blk = b.block(
                &format!("enc.l{}.block{idx}", level + 1),
                Flavor::Enc,
                Resample::Keep,
                cin,
                cout,
                cemb,
                heads_at(level),
                false,
            );
            encoder.push(blk);
            skip_channels.push(cout);
        }
    }

    let mut decoder = Vec::new();
    for level in (0..cfg.levels).rev() {
        if level == cfg.levels - 1 {
            let blk = b.block(
                &format!("dec.l{}.in0", level + 1),
                Flavor::Dec,
                Resample::Keep,
                cout,
                cout,
                cemb,
                heads_at(level),
                false,
            );
            decoder.push(blk);
            let blk = b.block(
                &format!("dec.l{}.in1", level + 1),
                Flavor::Dec,
                Resample::Keep,
                cout,
                cout,
                cemb,
                0,
                false,
            );
            decoder.push(blk);
        } else {
            let blk = b.block(
                &format!("dec.l{}.up", level + 1),
                Flavor::Dec,
                Resample::Up,
                cout,
                cout,
                cemb,
                0,
                false,
            );
            decoder.push(blk);
        }
        for idx in 0..=cfg.blocks_per_level {
            let cin = cout + skip_channels.pop().expect("skip stack balanced");
            cout = cfg.level_channels(level);
            let blk = b.block(
                &format!("dec.l{}.block{idx}", level + 1),
                Flavor::Dec,
                Resample::Keep,
                cin,
                cout,
                cemb,
                heads_at(level),
                true,
            );
            decoder.push(blk);
        }
    }
    debug_assert!(skip_channels.is_empty());
    let out_conv = b.weight("out.conv".into(), vec![1, cout, 3, 3]);
    let out_gain = b.gain("out.gain".into(), 1.0);
    (
        Topology {
            emb_linear,
            enc_conv,
            encoder,
            decoder,
            out_conv,
            out_gain,
        },
        b.groups,
    )
}

/// Number of scalar parameters implied by `cfg`.
pub fn param_count(cfg: &DenoiserConfig) -> Result<usize> {
    cfg.validate()?;
    Ok(build_topology(cfg).1.iter().map(|g| g.data.len()).sum())
}

/// Network weights plus the fixed random Fourier frequencies and phases.
#[derive(Debug, Clone)]
pub struct Denoiser {
    config: DenoiserConfig,
    freqs: Vec<f64>,
    phases: Vec<f64>,
    params: Vec<ParamGroup>,
    topo: Topology,
}

impl PartialEq for Denoiser {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.freqs == other.freqs
            && self.phases == other.phases
            && self.params == other.params
    }
}

impl Denoiser {
    /// Unit-Gaussian kernels under forced normalization, Fourier frequencies
    /// from `N(0, 1)` and phases from `U[0, 1)`.
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (topo, mut params) = build_topology(&config);
        let mut rng = rng::seeded(seed);
        let freqs = rng::normal_vec(&mut rng, config.embed_dim);
        let phases: Vec<f64> = (0..config.embed_dim).map(|_| rng.random::<f64>()).collect();
        for g in params.iter_mut().filter(|g| g.kind == ParamKind::Weight) {
            g.data
                .iter_mut()
                .for_each(|v| *v = rng.sample::<f64, _>(StandardNormal));
        }
        normalize_weights(&mut params)?;
        Ok(Self {
            config,
            freqs,
            phases,
            params,
            topo,
        })
    }

    /// Reassembles a model from stored parts, checking every group against
    /// the topology implied by `config`.
    pub fn from_parts(
        config: DenoiserConfig,
        freqs: Vec<f64>,
        phases: Vec<f64>,
        params: Vec<ParamGroup>,
    ) -> Result<Self> {
        config.validate()?;
        let (topo, expected) = build_topology(&config);
        if freqs.len() != config.embed_dim || phases.len() != config.embed_dim {
            return Err(Error::arg("Fourier table length differs from embed_dim"));
        }
        if expected.len() != params.len() {
            return Err(Error::arg("parameter group count differs from topology"));
        }
        for (e, p) in expected.iter().zip(&params) {
            if e.name != p.name || e.shape != p.shape || e.kind != p.kind || e.data.len() != p.data.len() {
                return Err(Error::arg(format!("parameter group {} does not match topology", p.name)));
            }
        }
        Ok(Self {
            config,
            freqs,
            phases,
            params,
            topo,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn fourier_freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn fourier_phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn params(&self) -> &[ParamGroup] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamGroup] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|g| g.data.len()).sum()
    }

    /// Forced weight normalization of all kernels.
    pub fn normalize_weights(&mut self) -> Result<()> {
        normalize_weights(&mut self.params)
    }

    fn check_inputs(&self, cond: &Tensor, noisy: &Tensor, a_bars: &[f64]) -> Result<()> {
        if cond.shape() != noisy.shape() || cond.c != 1 {
            return Err(Error::arg("condition and noisy batches must be equal single-channel shapes"));
        }
        if a_bars.len() != cond.n {
            return Err(Error::arg("one noise level per batch entry required"));
        }
        if let Some(a) = a_bars.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::arg(format!("noise level {a} outside (0, 1]")));
        }
        self.config.check_spatial(cond.w, cond.h)
    }

    fn forward<'t>(&'t self, tape: &mut Tape<'t>, cond: &Tensor, noisy: &Tensor, a_bars: &[f64]) -> NodeId {
        let n = cond.n;
        let e = self.config.embed_dim;
        let mut fourier = Tensor::zeros(n, e, 1, 1);
        for (i, &a) in a_bars.iter().enumerate() {
            for (k, v) in mp::mp_fourier_embed(a, &self.freqs, &self.phases).into_iter().enumerate() {
                fourier.data[k * n + i] = v;
            }
        }
        let fourier = tape.leaf(fourier);
        let emb = tape.conv(fourier, self.topo.emb_linear, None, 1);
        let emb = tape.silu(emb);

        // channel-major: condition planes, noisy planes, constant planes
        let mut input = Tensor::zeros(n, 3, cond.h, cond.w);
        let len = cond.len();
        input.data[..len].copy_from_slice(&cond.data);
        input.data[len..2 * len].copy_from_slice(&noisy.data);
        input.data[2 * len..].iter_mut().for_each(|v| *v = 1.0);
        let input = tape.leaf(input);
        let mut x = tape.conv(input, self.topo.enc_conv, None, 3);
        let mut skips = vec![x];
        for blk in &self.topo.encoder {
            x = self.block(tape, blk, x, emb);
            skips.push(x);
        }
        for blk in &self.topo.decoder {
            if blk.takes_skip {
                let s = skips.pop().expect("skip stack balanced");
                x = tape.cat(x, s, CONCAT_BALANCE);
            }
            x = self.block(tape, blk, x, emb);
        }
        tape.conv(x, self.topo.out_conv, Some(self.topo.out_gain), 3)
    }

    fn block<'t>(&self, tape: &mut Tape<'t>, blk: &Block, mut x: NodeId, emb: NodeId) -> NodeId {
        x = match blk.resample {
            Resample::Keep => x,
            Resample::Down => tape.down(x),
            Resample::Up => tape.up(x),
        };
        if blk.flavor == Flavor::Enc {
            if let Some(skip) = blk.conv_skip {
                x = tape.conv(x, skip, None, 1);
            }
            x = tape.pixel_norm(x);
        }
        let h = tape.silu(x);
        let mut y = tape.conv(h, blk.conv_res0, None, 3);
        let c = tape.conv(emb, blk.emb_linear, Some(blk.emb_gain), 1);
        y = tape.modulate(y, c);
        y = tape.silu(y);
        y = tape.conv(y, blk.conv_res1, None, 3);
        if blk.flavor == Flavor::Dec {
            if let Some(skip) = blk.conv_skip {
                x = tape.conv(x, skip, None, 1);
            }
        }
        x = tape.sum(x, y, RES_BALANCE);
        if let (Some(qkv), Some(proj)) = (blk.attn_qkv, blk.attn_proj) {
            let q = tape.conv(x, qkv, None, 1);
            let a = tape.attention(q, blk.heads);
            let a = tape.conv(a, proj, None, 1);
            x = tape.sum(x, a, ATTN_BALANCE);
        }
        tape.clip(x, CLIP_ACT)
    }

    /// Predicted noise for a batch of `[n, 1, h, w]` condition/noisy pairs.
    pub fn predict_batch(&self, cond: &Tensor, noisy: &Tensor, a_bars: &[f64]) -> Result<Tensor> {
        self.check_inputs(cond, noisy, a_bars)?;
        let mut tape = Tape::new(&self.params);
        let out = self.forward(&mut tape, cond, noisy, a_bars);
        Ok(tape.into_value(out))
    }

    pub fn predict(&self, cond: &Image, noisy: &Image, a_bar: f64) -> Result<Image> {
        cond.ensure_same_shape(noisy)?;
        let c = Tensor::from_images(&[cond])?;
        let y = Tensor::from_images(&[noisy])?;
        Ok(self.predict_batch(&c, &y, &[a_bar])?.image(0, 0))
    }

    /// Output together with the parameter gradient of `<output, dout>`, where
    /// `dout` is produced from the output by `seed`.
    pub fn predict_and_backprop(
        &self,
        cond: &Tensor,
        noisy: &Tensor,
        a_bars: &[f64],
        seed: impl FnOnce(&Tensor) -> Tensor,
    ) -> Result<(Tensor, Gradients)> {
        self.check_inputs(cond, noisy, a_bars)?;
        let mut tape = Tape::new(&self.params);
        let out = self.forward(&mut tape, cond, noisy, a_bars);
        let dout = seed(tape.value(out));
        let grads = tape.backward(out, dout);
        Ok((tape.into_value(out), grads))
    }
}
