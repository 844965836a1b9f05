//! Run configuration: the trainer knobs and the flat `key = value` config
//! file that drives every command.
//!
//! Every key has a default, so an empty file is a valid config. Unknown
//! keys are rejected by name rather than ignored, which catches typos
//! before a long run burns time on the wrong settings.

use crate::error::{Error, Result};
use crate::graphs::JointGraph;
use crate::metrics::{Averaging, ToleranceBasis, DEFAULT_IOU_THRESHOLDS};
use crate::models::{
    FusionConfig, FusionModule, HandshapeConfig, HandshapeNetwork, SegmentationConfig,
    SegmentationNetwork,
};
use crate::synth::{GenConfig, HandshapeGenConfig};
use crate::train::losses::LossConfig;

/// Optimizer and schedule settings for one training stage.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Sequences are padded or truncated to this many frames.
    pub t_max: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Fraction of sequences held out for checkpoint selection.
    pub val_fraction: f64,
    /// Mirror training sequences left-right with probability one half.
    pub augment_flip: bool,
    /// Stage 3 only: train the whole segmentation stack instead of just the
    /// head and fusion parameters.
    pub unfreeze_backbone: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 7,
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 4,
            t_max: 256,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            val_fraction: 0.2,
            augment_flip: false,
            unfreeze_backbone: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate {} out of range", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.t_max == 0 {
            return Err(Error::config("epochs, batch size, and t_max must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{} = {} outside [0, 1)", name, b)));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::config(format!("epsilon {} out of range", self.eps)));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::config(format!(
                "validation fraction {} outside [0, 1)",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// Evaluation settings shared by the metrics commands.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub boundary_thresholds: Vec<usize>,
    pub iou_thresholds: Vec<f64>,
    pub tolerance_basis: ToleranceBasis,
    pub averaging: Averaging,
    /// Minimum-training-count grid for recognition accuracy.
    pub ks: Vec<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            boundary_thresholds: vec![1, 2, 3, 4],
            iou_thresholds: DEFAULT_IOU_THRESHOLDS.to_vec(),
            tolerance_basis: ToleranceBasis::GroundTruth,
            averaging: Averaging::PerSequence,
            ks: vec![6, 10, 15, 20, 30],
        }
    }
}

/// Everything a run reads from its config file. One seed feeds the whole
/// pipeline; the handshape generator gets a derived seed so its random
/// streams never collide with the corpus generator's.
#[derive(Debug, Clone)]
pub struct FileConfig {
    pub seed: u64,
    pub gen: GenConfig,
    pub hand: HandshapeGenConfig,
    /// Segmentation network architecture; the defaults are the full-size
    /// model, desk-scale runs shrink the channel list in the config file.
    pub seg: SegmentationConfig,
    /// Hidden widths of the handshape network's graph convolutions.
    pub hand_hidden: Vec<usize>,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub stage3_epochs: usize,
    /// Epochs for the segment-level gloss classifier the recognition
    /// harness trains when no checkpoint is supplied.
    pub recognizer_epochs: usize,
    pub eval: EvalOptions,
}

impl Default for FileConfig {
    fn default() -> Self {
        let seed = 7;
        let mut cfg = FileConfig {
            seed,
            gen: GenConfig::default(),
            hand: HandshapeGenConfig::default(),
            seg: SegmentationConfig::default(),
            hand_hidden: HandshapeConfig::default().hidden,
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            stage1_epochs: 10,
            stage2_epochs: 30,
            stage3_epochs: 6,
            recognizer_epochs: 30,
            eval: EvalOptions::default(),
        };
        cfg.set_seed(seed);
        cfg
    }
}

impl FileConfig {
    /// Reseed every component from one value.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.gen.seed = seed;
        self.hand.seed = seed.wrapping_add(1);
        self.train.seed = seed;
    }

    pub fn train_config(&self, stage: u8) -> Result<TrainConfig> {
        let mut cfg = self.train.clone();
        cfg.epochs = match stage {
            1 => self.stage1_epochs,
            2 => self.stage2_epochs,
            3 => self.stage3_epochs,
            other => return Err(Error::config(format!("no stage {} exists", other))),
        };
        Ok(cfg)
    }

    /// Trainer settings for the gloss recognizer.
    pub fn recognizer_config(&self) -> TrainConfig {
        let mut cfg = self.train.clone();
        cfg.epochs = self.recognizer_epochs;
        cfg
    }

    pub fn seg_network(&self) -> Result<SegmentationNetwork> {
        SegmentationNetwork::new(self.seg.clone(), JointGraph::body())
    }

    /// The handshape architecture with `classes` output logits: stage 2
    /// passes the handshape inventory size, the gloss recognizer the gloss
    /// vocabulary size.
    pub fn hand_network(&self, classes: usize) -> Result<HandshapeNetwork> {
        HandshapeNetwork::new(
            HandshapeConfig {
                in_channels: 2,
                hidden: self.hand_hidden.clone(),
                num_classes: classes,
            },
            JointGraph::hand(),
        )
    }

    /// Fusion sized to the segmentation feature width. Stage 3 additionally
    /// requires the handshape width to agree.
    pub fn fusion_module(&self) -> Result<FusionModule> {
        let dim = self.seg.block_channels.last().copied().unwrap_or(0);
        FusionModule::new(FusionConfig { dim })
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.seg.block_channels.is_empty() || self.hand_hidden.is_empty() {
            return Err(Error::config("model channel lists must be nonempty"));
        }
        if self.seg.block_channels.contains(&0) || self.hand_hidden.contains(&0) {
            return Err(Error::config("model channel widths must be positive"));
        }
        for (name, k) in [
            ("seg.temporal_kernel", self.seg.temporal_kernel),
            ("seg.head_kernel", self.seg.head_kernel),
        ] {
            if k % 2 == 0 {
                return Err(Error::config(format!("{} = {} must be odd", name, k)));
            }
        }
        for stage in 1..=3 {
            self.train_config(stage)?.validate()?;
        }
        self.recognizer_config().validate()?;
        let g = &self.gen;
        for (name, lo, hi) in [
            ("gen.signs", g.signs_min, g.signs_max),
            ("gen.sign_frames", g.sign_frames_min, g.sign_frames_max),
            ("gen.gap_frames", g.gap_frames_min, g.gap_frames_max),
        ] {
            if lo > hi {
                return Err(Error::config(format!(
                    "{}_min {} exceeds {}_max {}",
                    name, lo, name, hi
                )));
            }
        }
        if g.sequences == 0 || g.num_glosses == 0 || g.signs_min == 0 || g.sign_frames_min == 0 {
            return Err(Error::config("generator counts must be positive"));
        }
        if !(0.0..=1.0).contains(&g.zero_gap_prob) {
            return Err(Error::config(format!("gen.zero_gap_prob {} outside [0, 1]", g.zero_gap_prob)));
        }
        if self.hand.classes == 0 || self.hand.samples_per_class == 0 {
            return Err(Error::config("handshape generator counts must be positive"));
        }
        let e = &self.eval;
        if e.boundary_thresholds.is_empty() || e.iou_thresholds.is_empty() || e.ks.is_empty() {
            return Err(Error::config("evaluation threshold lists must be nonempty"));
        }
        if e.boundary_thresholds.contains(&0) {
            return Err(Error::config("a zero boundary threshold can never match"));
        }
        if e.iou_thresholds.iter().any(|&f| !(0.0..1.0).contains(&f)) {
            return Err(Error::config("IoU thresholds must sit in [0, 1)"));
        }
        Ok(())
    }

    /// Full snapshot in the same `key = value` syntax the parser reads.
    pub fn to_text(&self) -> String {
        let g = &self.gen;
        let t = &self.train;
        let e = &self.eval;
        let list_u = |xs: &[usize]| {
            xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        };
        let list_f = |xs: &[f64]| {
            xs.iter().map(|x| format!("{}", x)).collect::<Vec<_>>().join(",")
        };
        let basis = match e.tolerance_basis {
            ToleranceBasis::GroundTruth => "gt",
            ToleranceBasis::Prediction => "pred",
        };
        let avg = match e.averaging {
            Averaging::PerSequence => "per_sequence",
            Averaging::Micro => "micro",
        };
        format!(
            "seed = {}\n\
             gen.sequences = {}\n\
             gen.fps = {}\n\
             gen.num_glosses = {}\n\
             gen.signs_min = {}\n\
             gen.signs_max = {}\n\
             gen.sign_frames_min = {}\n\
             gen.sign_frames_max = {}\n\
             gen.gap_frames_min = {}\n\
             gen.gap_frames_max = {}\n\
             gen.zero_gap_prob = {}\n\
             gen.lead_frames_max = {}\n\
             gen.noise_sigma = {}\n\
             gen.target_len = {}\n\
             gen.ambiguous_motion = {}\n\
             gen.skewed_gloss_freq = {}\n\
             hand.classes = {}\n\
             hand.samples_per_class = {}\n\
             hand.noise_sigma = {}\n\
             seg.blocks = {}\n\
             seg.temporal_kernel = {}\n\
             seg.head_kernel = {}\n\
             hand.hidden = {}\n\
             loss.weight_padding = {}\n\
             loss.weight_transition = {}\n\
             loss.weight_interior = {}\n\
             loss.weight_boundary = {}\n\
             loss.lambda = {}\n\
             train.learning_rate = {}\n\
             train.batch_size = {}\n\
             train.t_max = {}\n\
             train.beta1 = {}\n\
             train.beta2 = {}\n\
             train.eps = {}\n\
             train.val_fraction = {}\n\
             train.augment_flip = {}\n\
             train.unfreeze_backbone = {}\n\
             train.stage1_epochs = {}\n\
             train.stage2_epochs = {}\n\
             train.stage3_epochs = {}\n\
             train.recognizer_epochs = {}\n\
             eval.boundary_thresholds = {}\n\
             eval.iou_thresholds = {}\n\
             eval.tolerance_basis = {}\n\
             eval.averaging = {}\n\
             eval.ks = {}\n",
            self.seed,
            g.sequences,
            g.fps,
            g.num_glosses,
            g.signs_min,
            g.signs_max,
            g.sign_frames_min,
            g.sign_frames_max,
            g.gap_frames_min,
            g.gap_frames_max,
            g.zero_gap_prob,
            g.lead_frames_max,
            g.noise_sigma,
            g.target_len.unwrap_or(0),
            g.ambiguous_motion,
            g.skewed_gloss_freq,
            self.hand.classes,
            self.hand.samples_per_class,
            self.hand.noise_sigma,
            list_u(&self.seg.block_channels),
            self.seg.temporal_kernel,
            self.seg.head_kernel,
            list_u(&self.hand_hidden),
            self.loss.class_weights[0],
            self.loss.class_weights[1],
            self.loss.class_weights[2],
            self.loss.class_weights[3],
            self.loss.lambda,
            t.learning_rate,
            t.batch_size,
            t.t_max,
            t.beta1,
            t.beta2,
            t.eps,
            t.val_fraction,
            t.augment_flip,
            t.unfreeze_backbone,
            self.stage1_epochs,
            self.stage2_epochs,
            self.stage3_epochs,
            self.recognizer_epochs,
            list_u(&e.boundary_thresholds),
            list_f(&e.iou_thresholds),
            basis,
            avg,
            list_u(&e.ks),
        )
    }
}

fn bad_value(key: &str, value: &str) -> Error {
    Error::config(format!("bad value {:?} for config key {:?}", value, key))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad_value(key, value))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad_value(key, value)),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|piece| piece.trim().parse().map_err(|_| bad_value(key, value)))
        .collect()
}

/// Parse a flat config file. Later assignments override earlier ones; the
/// result is validated before it is returned.
pub fn parse_config_text(text: &str) -> Result<FileConfig> {
    let mut cfg = FileConfig::default();
    let mut seed_override: Option<u64> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("config line {} is not `key = value`: {:?}", idx + 1, raw.trim()))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "seed" => seed_override = Some(parse_num(key, value)?),
            "gen.sequences" => cfg.gen.sequences = parse_num(key, value)?,
            "gen.fps" => cfg.gen.fps = parse_num(key, value)?,
            "gen.num_glosses" => cfg.gen.num_glosses = parse_num(key, value)?,
            "gen.signs_min" => cfg.gen.signs_min = parse_num(key, value)?,
            "gen.signs_max" => cfg.gen.signs_max = parse_num(key, value)?,
            "gen.sign_frames_min" => cfg.gen.sign_frames_min = parse_num(key, value)?,
            "gen.sign_frames_max" => cfg.gen.sign_frames_max = parse_num(key, value)?,
            "gen.gap_frames_min" => cfg.gen.gap_frames_min = parse_num(key, value)?,
            "gen.gap_frames_max" => cfg.gen.gap_frames_max = parse_num(key, value)?,
            "gen.zero_gap_prob" => cfg.gen.zero_gap_prob = parse_num(key, value)?,
            "gen.lead_frames_max" => cfg.gen.lead_frames_max = parse_num(key, value)?,
            "gen.noise_sigma" => cfg.gen.noise_sigma = parse_num(key, value)?,
            "gen.target_len" => {
                let n: usize = parse_num(key, value)?;
                cfg.gen.target_len = (n > 0).then_some(n);
            }
            "gen.ambiguous_motion" => cfg.gen.ambiguous_motion = parse_bool(key, value)?,
            "gen.skewed_gloss_freq" => cfg.gen.skewed_gloss_freq = parse_bool(key, value)?,
            "hand.classes" => cfg.hand.classes = parse_num(key, value)?,
            "hand.samples_per_class" => cfg.hand.samples_per_class = parse_num(key, value)?,
            "hand.noise_sigma" => cfg.hand.noise_sigma = parse_num(key, value)?,
            "seg.blocks" => cfg.seg.block_channels = parse_list(key, value)?,
            "seg.temporal_kernel" => cfg.seg.temporal_kernel = parse_num(key, value)?,
            "seg.head_kernel" => cfg.seg.head_kernel = parse_num(key, value)?,
            "hand.hidden" => cfg.hand_hidden = parse_list(key, value)?,
            "loss.weight_padding" => cfg.loss.class_weights[0] = parse_num(key, value)?,
            "loss.weight_transition" => cfg.loss.class_weights[1] = parse_num(key, value)?,
            "loss.weight_interior" => cfg.loss.class_weights[2] = parse_num(key, value)?,
            "loss.weight_boundary" => cfg.loss.class_weights[3] = parse_num(key, value)?,
            "loss.lambda" => cfg.loss.lambda = parse_num(key, value)?,
            "train.learning_rate" => cfg.train.learning_rate = parse_num(key, value)?,
            "train.batch_size" => cfg.train.batch_size = parse_num(key, value)?,
            "train.t_max" => cfg.train.t_max = parse_num(key, value)?,
            "train.beta1" => cfg.train.beta1 = parse_num(key, value)?,
            "train.beta2" => cfg.train.beta2 = parse_num(key, value)?,
            "train.eps" => cfg.train.eps = parse_num(key, value)?,
            "train.val_fraction" => cfg.train.val_fraction = parse_num(key, value)?,
            "train.augment_flip" => cfg.train.augment_flip = parse_bool(key, value)?,
            "train.unfreeze_backbone" => cfg.train.unfreeze_backbone = parse_bool(key, value)?,
            "train.stage1_epochs" => cfg.stage1_epochs = parse_num(key, value)?,
            "train.stage2_epochs" => cfg.stage2_epochs = parse_num(key, value)?,
            "train.stage3_epochs" => cfg.stage3_epochs = parse_num(key, value)?,
            "train.recognizer_epochs" => cfg.recognizer_epochs = parse_num(key, value)?,
            "eval.boundary_thresholds" => cfg.eval.boundary_thresholds = parse_list(key, value)?,
            "eval.iou_thresholds" => cfg.eval.iou_thresholds = parse_list(key, value)?,
            "eval.tolerance_basis" => {
                cfg.eval.tolerance_basis = match value {
                    "gt" => ToleranceBasis::GroundTruth,
                    "pred" => ToleranceBasis::Prediction,
                    _ => return Err(bad_value(key, value)),
                }
            }
            "eval.averaging" => {
                cfg.eval.averaging = match value {
                    "per_sequence" => Averaging::PerSequence,
                    "micro" => Averaging::Micro,
                    _ => return Err(bad_value(key, value)),
                }
            }
            "eval.ks" => cfg.eval.ks = parse_list(key, value)?,
            _ => return Err(Error::config(format!("unknown config key {:?}", key))),
        }
    }
    if let Some(seed) = seed_override {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config_file(path: &std::path::Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    parse_config_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        let cfg = parse_config_text("").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.gen.sequences, 100);
        assert_eq!(cfg.loss.class_weights, [0.1, 1.0, 1.0, 5.0]);
        assert_eq!(cfg.eval.ks, vec![6, 10, 15, 20, 30]);
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = FileConfig::default();
        cfg.set_seed(42);
        cfg.gen.sequences = 17;
        cfg.train.learning_rate = 3e-3;
        cfg.eval.tolerance_basis = ToleranceBasis::Prediction;
        cfg.eval.averaging = Averaging::Micro;
        cfg.stage2_epochs = 55;
        let text = cfg.to_text();
        let back = parse_config_text(&text).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.gen.sequences, 17);
        assert_eq!(back.gen.seed, 42);
        assert_eq!(back.hand.seed, 43);
        assert_eq!(back.train.learning_rate, 3e-3);
        assert_eq!(back.eval.tolerance_basis, ToleranceBasis::Prediction);
        assert_eq!(back.eval.averaging, Averaging::Micro);
        assert_eq!(back.stage2_epochs, 55);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn seed_propagates_no_matter_where_it_appears() {
        let before = parse_config_text("seed = 99\ngen.sequences = 5\n").unwrap();
        let after = parse_config_text("gen.sequences = 5\nseed = 99\n").unwrap();
        assert_eq!(before.gen.seed, 99);
        assert_eq!(after.gen.seed, 99);
        assert_eq!(before.hand.seed, after.hand.seed);
    }

    #[test]
    fn unknown_keys_are_named_in_the_error() {
        let err = parse_config_text("gen.sequencs = 10\n").unwrap_err();
        assert!(err.to_string().contains("gen.sequencs"), "{}", err);
        let err = parse_config_text("train.lr = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("train.lr"), "{}", err);
    }

    #[test]
    fn bad_values_are_named() {
        let err = parse_config_text("train.learning_rate = fast\n").unwrap_err();
        assert!(err.to_string().contains("train.learning_rate"), "{}", err);
        let err = parse_config_text("gen.ambiguous_motion = yes\n").unwrap_err();
        assert!(err.to_string().contains("gen.ambiguous_motion"), "{}", err);
        assert!(parse_config_text("just some words\n").is_err());
    }

    #[test]
    fn comments_blanks_and_overrides() {
        let text = "# run settings\n\nseed = 3   # trailing comment\ntrain.batch_size = 2\ntrain.batch_size = 8\n";
        let cfg = parse_config_text(text).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.train.batch_size, 8);
    }

    #[test]
    fn validation_rejects_inconsistent_ranges() {
        assert!(parse_config_text("gen.signs_min = 9\ngen.signs_max = 3\n").is_err());
        assert!(parse_config_text("train.val_fraction = 1.0\n").is_err());
        assert!(parse_config_text("loss.lambda = -1\n").is_err());
        assert!(parse_config_text("eval.boundary_thresholds = 0,1\n").is_err());
        assert!(parse_config_text("eval.iou_thresholds = 1.5\n").is_err());
        assert!(parse_config_text("train.stage1_epochs = 0\n").is_err());
    }

    #[test]
    fn target_len_zero_means_natural_length() {
        let cfg = parse_config_text("gen.target_len = 0\n").unwrap();
        assert_eq!(cfg.gen.target_len, None);
        let cfg = parse_config_text("gen.target_len = 96\n").unwrap();
        assert_eq!(cfg.gen.target_len, Some(96));
    }

    #[test]
    fn stage_epochs_select_by_stage() {
        let cfg = parse_config_text(
            "train.stage1_epochs = 11\ntrain.stage2_epochs = 22\ntrain.stage3_epochs = 33\n",
        )
        .unwrap();
        assert_eq!(cfg.train_config(1).unwrap().epochs, 11);
        assert_eq!(cfg.train_config(2).unwrap().epochs, 22);
        assert_eq!(cfg.train_config(3).unwrap().epochs, 33);
        assert!(cfg.train_config(4).is_err());
    }

    #[test]
    fn architecture_keys_build_matching_networks() {
        let text = "seg.blocks = 16,16,32\nseg.temporal_kernel = 5\nseg.head_kernel = 3\nhand.hidden = 16,32\n";
        let cfg = parse_config_text(text).unwrap();
        assert_eq!(cfg.seg.block_channels, vec![16, 16, 32]);
        let seg = cfg.seg_network().unwrap();
        assert_eq!(seg.cfg.feature_dim(), 32);
        let hand = cfg.hand_network(5).unwrap();
        assert_eq!(hand.cfg.feature_dim(), 32);
        assert_eq!(hand.cfg.num_classes, 5);
        assert_eq!(cfg.fusion_module().unwrap().cfg.dim, 32);
        assert_eq!(parse_config_text(&cfg.to_text()).unwrap().seg.block_channels, vec![16, 16, 32]);
    }

    #[test]
    fn architecture_keys_are_validated() {
        assert!(parse_config_text("seg.temporal_kernel = 4\n").is_err());
        assert!(parse_config_text("seg.head_kernel = 2\n").is_err());
        assert!(parse_config_text("seg.blocks = 16,0,32\n").is_err());
        assert!(parse_config_text("hand.hidden = \n").is_err());
    }
}
