//! Model assembly: configuration, parameter registration, the tape-side
//! training graphs and the streaming inference path.

pub mod checkpoint;
pub mod context;
pub mod graph;
pub mod infer;

use crate::error::{CoreError, Result};
use crate::ops::MhaConfig;
use crate::params::ParamStore;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Which entity detector (if any) a checkpoint carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    None,
    Predictor,
    EncoderPredictor,
}

impl DetectorKind {
    pub fn variant_name(&self) -> &'static str {
        match self {
            DetectorKind::None => "catt",
            DetectorKind::Predictor => "catt+ped",
            DetectorKind::EncoderPredictor => "catt+eped",
        }
    }

    pub fn from_variant_name(s: &str) -> Result<Self> {
        match s {
            "catt" => Ok(DetectorKind::None),
            "catt+ped" => Ok(DetectorKind::Predictor),
            "catt+eped" => Ok(DetectorKind::EncoderPredictor),
            other => Err(CoreError::Config(format!(
                "unknown variant {other:?} (expected catt, catt+ped or catt+eped)"
            ))),
        }
    }
}

/// Activation applied to the detector's query/key/value projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EdActivation {
    #[default]
    Identity,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub feat_dim: usize,
    pub model_dim: usize,
    pub num_heads: usize,
    pub enc_blocks: usize,
    pub enc_ff_dim: usize,
    pub pred_layers: usize,
    pub joint_hidden: usize,
    pub ctx_hidden: usize,
    pub vocab: usize,
    pub pos_enc: bool,
    pub detector: DetectorKind,
    pub ed_activation: EdActivation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feat_dim: 16,
            model_dim: 64,
            num_heads: 2,
            enc_blocks: 2,
            enc_ff_dim: 128,
            pred_layers: 1,
            joint_hidden: 64,
            ctx_hidden: 64,
            vocab: 40,
            pos_enc: true,
            detector: DetectorKind::None,
            ed_activation: EdActivation::Identity,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        MhaConfig::new(self.model_dim, self.num_heads)?;
        if self.vocab == 0 || self.feat_dim == 0 || self.pred_layers == 0 {
            return Err(CoreError::Config("vocab, feat_dim, pred_layers must be positive".into()));
        }
        Ok(())
    }

    pub fn mha(&self) -> MhaConfig {
        MhaConfig { model_dim: self.model_dim, num_heads: self.num_heads }
    }

    /// Blank label index in the joint output space.
    pub fn blank(&self) -> usize {
        self.vocab
    }

    /// Start-of-sequence row in the predictor embedding table.
    pub fn sos(&self) -> usize {
        self.vocab
    }
}

/// Input feature sequence with its frame duration (for real-time-factor
/// accounting).
#[derive(Debug, Clone)]
pub struct AcousticFrames<F: Scalar> {
    pub feats: crate::tensor::Tensor<F>,
    pub frame_ms: f64,
}

impl<F: Scalar> AcousticFrames<F> {
    pub fn audio_seconds(&self) -> f64 {
        self.feats.rows() as f64 * self.frame_ms / 1000.0
    }
}

#[derive(Clone)]
pub struct Model<F: Scalar> {
    pub cfg: ModelConfig,
    pub params: ParamStore<F>,
}

impl<F: Scalar> Model<F> {
    /// Builds a freshly initialized model. Parameter init draws from
    /// name-keyed RNG streams, so it is independent of registration order.
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut p = ParamStore::new(seed);
        let d = cfg.model_dim;

        // Context encoder. Token embeddings are shared with the prediction
        // network (pred.embed), which separates confusable tokens early and
        // carries that structure into the phrase embeddings.
        let ch = cfg.ctx_hidden;
        for dir in ["fwd", "bwd"] {
            p.xavier(&format!("ctx.{dir}.w_ih"), 4 * ch, d);
            p.constant_row(&format!("ctx.{dir}.b_ih"), 4 * ch, 0.0);
            p.xavier(&format!("ctx.{dir}.w_hh"), 4 * ch, ch);
            p.constant_row(&format!("ctx.{dir}.b_hh"), 4 * ch, 0.0);
        }
        p.xavier("ctx.proj.w", d, 2 * ch);
        p.constant_row("ctx.proj.b", d, 0.0);
        p.random_row("ctx.null", d, 0.1);

        // Audio encoder.
        p.xavier("enc.in.w", d, cfg.feat_dim);
        p.constant_row("enc.in.b", d, 0.0);
        for b in 0..cfg.enc_blocks {
            let pre = format!("enc.blk{b}");
            Self::register_layernorm(&mut p, &format!("{pre}.ln1"), d);
            Self::register_mha(&mut p, &format!("{pre}.attn"), d);
            Self::register_layernorm(&mut p, &format!("{pre}.ln2"), d);
            p.xavier(&format!("{pre}.ff.w1"), cfg.enc_ff_dim, d);
            p.constant_row(&format!("{pre}.ff.b1"), cfg.enc_ff_dim, 0.0);
            p.xavier(&format!("{pre}.ff.w2"), d, cfg.enc_ff_dim);
            p.constant_row(&format!("{pre}.ff.b2"), d, 0.0);
        }
        Self::register_layernorm(&mut p, "enc.lnf", d);

        // Prediction network (token history).
        p.xavier("pred.embed", cfg.vocab + 1, d);
        for l in 0..cfg.pred_layers {
            let pre = format!("pred.l{l}");
            p.xavier(&format!("{pre}.w_ih"), 4 * d, d);
            p.constant_row(&format!("{pre}.b_ih"), 4 * d, 0.0);
            p.xavier(&format!("{pre}.w_hh"), 4 * d, d);
            p.constant_row(&format!("{pre}.b_hh"), 4 * d, 0.0);
        }

        // Biasing layers, one per side.
        for side in ["enc", "pred"] {
            let pre = format!("bias.{side}");
            Self::register_mha(&mut p, &format!("{pre}.attn"), d);
            Self::register_layernorm(&mut p, &format!("{pre}.ln_b"), d);
            Self::register_layernorm(&mut p, &format!("{pre}.ln_q"), d);
            p.xavier(&format!("{pre}.cmb.w"), d, 2 * d);
            p.constant_row(&format!("{pre}.cmb.b"), d, 0.0);
        }

        // Joint network.
        p.xavier("joint.we", cfg.joint_hidden, d);
        p.xavier("joint.wp", cfg.joint_hidden, d);
        p.constant_row("joint.b", cfg.joint_hidden, 0.0);
        p.xavier("joint.out.w", cfg.vocab + 1, cfg.joint_hidden);
        p.constant_row("joint.out.b", cfg.vocab + 1, 0.0);

        // Entity detector head.
        if cfg.detector != DetectorKind::None {
            for proj in ["q", "k", "v"] {
                p.xavier(&format!("det.w{proj}"), d, d);
                p.constant_row(&format!("det.b{proj}"), d, 0.0);
            }
            p.xavier("det.cls.w", 2, d);
            p.constant_row("det.cls.b", 2, 0.0);
        }

        Ok(Model { cfg, params: p })
    }

    fn register_layernorm(p: &mut ParamStore<F>, prefix: &str, n: usize) {
        p.constant_row(&format!("{prefix}.g"), n, 1.0);
        p.constant_row(&format!("{prefix}.b"), n, 0.0);
    }

    fn register_mha(p: &mut ParamStore<F>, prefix: &str, d: usize) {
        for proj in ["q", "k", "v", "o"] {
            p.xavier(&format!("{prefix}.w{proj}"), d, d);
            p.constant_row(&format!("{prefix}.b{proj}"), d, 0.0);
        }
    }

    pub fn cast<G: Scalar>(&self) -> Model<G> {
        Model { cfg: self.cfg.clone(), params: self.params.cast() }
    }
}
