//! Synthetic signing corpora with known frame labels.
//!
//! Each gloss id deterministically fixes a sign prototype: a sinusoidal
//! wrist path (fast, sign-like motion) and a handshape built from base-3
//! finger curls. Sequences alternate rest and transition movement (slow,
//! smoothstep paths, relaxed hand) with signs (fast paths, canonical
//! handshape held exactly at the first and last sign frame). Boundary labels
//! sit on sign onsets, so the velocity contrast and the handshape switch
//! both mark them; the `ambiguous_motion` knob removes the velocity contrast
//! to leave handshape as the only reliable cue.
//!
//! The handshape dataset generator reuses the corpus hand geometry and the
//! same upsample-and-renormalize path as dominant-hand extraction, so a
//! recognizer trained on the dataset sees the distribution it will meet
//! inside sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{normalize_frame_points, upsample_hand_points, Label, PoseSequence};
use crate::error::{Error, Result};
use crate::graphs::body;
use crate::posefile::{HandshapeDataset, HandshapeSample};

/// Finger curl levels indexed by a base-3 digit of the class id.
const CURL_LEVELS: [f64; 3] = [0.1, 0.55, 1.0];
/// Curl used outside signs. Chosen off the canonical levels so a relaxed
/// hand is not confusable with any class pose.
pub const RELAXED_CURL: f64 = 0.75;
/// Interior handshape drift amplitude (zero when noise is zero so that
/// noiseless generation is exactly repeatable).
const DRIFT_AMP: f64 = 0.08;

const FINGER_LEN: [f64; 5] = [0.75, 1.0, 1.1, 1.0, 0.8];

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic hash of (a, b) into [0, 1).
fn hash_unit(a: u64, b: u64) -> f64 {
    let x = splitmix(a.wrapping_mul(0x51D345B1).wrapping_add(b).wrapping_add(1));
    (x >> 11) as f64 / (1u64 << 53) as f64
}

/// Everything a gloss id implies about how its sign is performed.
#[derive(Debug, Clone, PartialEq)]
pub struct SignPrototype {
    pub gloss: usize,
    pub handshape: usize,
    pub amp: f64,
    pub freq_x: f64,
    pub freq_y: f64,
    pub phase_x: f64,
    pub phase_y: f64,
    pub orient: f64,
}

impl SignPrototype {
    pub fn for_gloss(gloss: usize, num_glosses: usize) -> Self {
        let g = gloss as u64;
        SignPrototype {
            gloss,
            handshape: gloss % num_glosses,
            amp: 0.22 + 0.12 * hash_unit(g, 1),
            freq_x: 0.8 + 0.5 * hash_unit(g, 2),
            freq_y: 1.1 + 0.6 * hash_unit(g, 3),
            phase_x: std::f64::consts::TAU * hash_unit(g, 4),
            phase_y: std::f64::consts::TAU * hash_unit(g, 5),
            orient: 0.34 * (hash_unit(g, 6) - 0.5),
        }
    }

    /// Wrist offset from the sign's start position after `t` of the sign's
    /// unit-duration has elapsed. Zero at `t = 0`.
    fn path(&self, t: f64) -> (f64, f64) {
        let wx = std::f64::consts::TAU * self.freq_x;
        let wy = std::f64::consts::TAU * self.freq_y;
        (
            self.amp * ((wx * t + self.phase_x).sin() - self.phase_x.sin()),
            self.amp * ((wy * t + self.phase_y).cos() - self.phase_y.cos()),
        )
    }
}

/// Per-finger curls for a handshape class: base-3 digits, thumb first.
pub fn finger_curls(class: usize) -> [f64; 5] {
    let mut c = class;
    let mut out = [0.0; 5];
    for slot in &mut out {
        *slot = CURL_LEVELS[c % 3];
        c /= 3;
    }
    out
}

/// Ten (base, tip) slot offsets from the wrist for a handshape. `class`
/// `None` is the relaxed between-signs hand. `drift` in [0, 1] bends the
/// curls mid-sign by `drift_amp * sin(pi * drift)`, exactly zero at 0 and 1.
pub fn hand_slots(
    class: Option<usize>,
    scale: f64,
    drift: f64,
    drift_amp: f64,
) -> [(f64, f64); 10] {
    let curls = match class {
        Some(c) => finger_curls(c),
        None => [RELAXED_CURL; 5],
    };
    let (jitter_salt, orient) = match class {
        Some(c) => (
            c as u64,
            0.34 * (hash_unit(c as u64, 7) - 0.5),
        ),
        None => (u64::MAX, 0.0),
    };
    let wobble = (std::f64::consts::PI * drift).sin() * drift_amp;
    let mut out = [(0.0, 0.0); 10];
    for f in 0..5 {
        let jitter = if class.is_some() {
            0.14 * (hash_unit(jitter_salt, 10 + f as u64) - 0.5)
        } else {
            0.0
        };
        let theta = std::f64::consts::FRAC_PI_2 + (f as f64 - 2.0) * 0.32 + jitter + orient;
        let curl = (curls[f] + wobble * (0.7 * f as f64 + 1.0).sin()).clamp(0.0, 1.15);
        let base = (
            0.45 * scale * theta.cos(),
            0.45 * scale * theta.sin(),
        );
        let dir = theta + curl;
        let len = FINGER_LEN[f] * scale * (1.0 - 0.72 * curl);
        out[2 * f] = base;
        out[2 * f + 1] = (base.0 + len * dir.cos(), base.1 + len * dir.sin());
    }
    out
}

/// One labeled sign occurrence inside a generated sequence. `start..=end`
/// are frame indices (the boundary frame and its interior run).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentInfo {
    pub gloss: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub sequences: usize,
    pub seed: u64,
    pub fps: f64,
    pub num_glosses: usize,
    pub signs_min: usize,
    pub signs_max: usize,
    pub sign_frames_min: usize,
    pub sign_frames_max: usize,
    pub gap_frames_min: usize,
    pub gap_frames_max: usize,
    /// Probability that consecutive signs touch with no transition frames.
    pub zero_gap_prob: f64,
    pub lead_frames_max: usize,
    pub noise_sigma: f64,
    /// Exact output length; sign content is trimmed to fit and trailing
    /// rest fills the remainder.
    pub target_len: Option<usize>,
    /// Give transitions sign-like motion statistics so velocity alone cannot
    /// find boundaries; the handshape switch remains.
    pub ambiguous_motion: bool,
    /// Skew gloss frequencies toward low ids (for studying accuracy as a
    /// function of per-class sample counts).
    pub skewed_gloss_freq: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            sequences: 100,
            seed: 7,
            fps: 25.0,
            num_glosses: 87,
            signs_min: 3,
            signs_max: 6,
            sign_frames_min: 10,
            sign_frames_max: 20,
            gap_frames_min: 3,
            gap_frames_max: 8,
            zero_gap_prob: 0.3,
            lead_frames_max: 6,
            noise_sigma: 0.02,
            target_len: Some(128),
            ambiguous_motion: false,
            skewed_gloss_freq: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedSequence {
    pub seq: PoseSequence,
    pub segments: Vec<SegmentInfo>,
}

const HAND_SCALE: f64 = 0.16;
const REST_POINT: (f64, f64) = (0.35, -0.2);
const MOTION_BOX: (f64, f64, f64, f64) = (-0.1, 0.8, -0.55, 0.6);

struct FramePlan {
    label: Label,
    wrist: (f64, f64),
    /// Handshape class during signs, None when relaxed.
    shape: Option<usize>,
    /// Drift phase in [0, 1] across the sign.
    drift: f64,
}

fn clamp_to_box(p: (f64, f64)) -> (f64, f64) {
    (
        p.0.clamp(MOTION_BOX.0, MOTION_BOX.1),
        p.1.clamp(MOTION_BOX.2, MOTION_BOX.3),
    )
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn sample_gloss(rng: &mut ChaCha8Rng, cfg: &GenConfig) -> usize {
    if cfg.skewed_gloss_freq {
        // quadratic map concentrates mass on low ids
        let r: f64 = rng.random();
        ((r * r * cfg.num_glosses as f64) as usize).min(cfg.num_glosses - 1)
    } else {
        rng.random_range(0..cfg.num_glosses)
    }
}

/// Build one sequence. `index` selects an independent random substream of
/// the corpus seed, so sequences can be generated in any order.
pub fn generate_sequence(cfg: &GenConfig, index: usize) -> Result<GeneratedSequence> {
    if cfg.num_glosses == 0 || cfg.signs_min == 0 || cfg.signs_min > cfg.signs_max {
        return Err(Error::config("generator wants at least one sign and one gloss"));
    }
    if cfg.sign_frames_min < 2 || cfg.sign_frames_min > cfg.sign_frames_max {
        return Err(Error::config("sign duration range is empty or too short"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);

    // plan the wrist path and labels frame by frame
    let mut plan: Vec<FramePlan> = Vec::new();
    let mut segments: Vec<SegmentInfo> = Vec::new();
    let mut pos = (
        REST_POINT.0 + 0.06 * (rng.random::<f64>() - 0.5),
        REST_POINT.1 + 0.06 * (rng.random::<f64>() - 0.5),
    );

    let n_signs = rng.random_range(cfg.signs_min..=cfg.signs_max);
    let lead = rng.random_range(0..=cfg.lead_frames_max);
    push_rest(&mut plan, &mut rng, cfg, &mut pos, lead);

    for k in 0..n_signs {
        if k > 0 {
            let zero_gap = rng.random::<f64>() < cfg.zero_gap_prob;
            if !zero_gap {
                let gap = rng.random_range(cfg.gap_frames_min..=cfg.gap_frames_max.max(cfg.gap_frames_min));
                let target = clamp_to_box((
                    pos.0 + 0.5 * (rng.random::<f64>() - 0.5),
                    pos.1 + 0.5 * (rng.random::<f64>() - 0.5),
                ));
                push_transition(&mut plan, &mut rng, cfg, &mut pos, target, gap);
            }
        }
        let gloss = sample_gloss(&mut rng, cfg);
        let proto = SignPrototype::for_gloss(gloss, cfg.num_glosses);
        let dur = rng.random_range(cfg.sign_frames_min..=cfg.sign_frames_max);
        let start = plan.len();
        let p0 = pos;
        for i in 0..dur {
            // evaluate one step into the path so the boundary frame already
            // carries sign velocity
            let t = (i + 1) as f64 / dur as f64;
            let off = proto.path(t);
            let wrist = clamp_to_box((p0.0 + off.0, p0.1 + off.1));
            let drift = if dur > 1 { i as f64 / (dur - 1) as f64 } else { 0.0 };
            plan.push(FramePlan {
                label: if i == 0 { Label::Boundary } else { Label::Interior },
                wrist,
                shape: Some(proto.handshape),
                drift,
            });
            pos = wrist;
        }
        segments.push(SegmentInfo {
            gloss,
            start,
            end: plan.len() - 1,
        });
    }

    // settle back to rest
    let settle = rng.random_range(3..=6);
    let target = (
        REST_POINT.0 + 0.06 * (rng.random::<f64>() - 0.5),
        REST_POINT.1 + 0.06 * (rng.random::<f64>() - 0.5),
    );
    push_transition(&mut plan, &mut rng, cfg, &mut pos, target, settle);

    // fit the requested length: drop whole trailing signs if over, rest if under
    if let Some(t_len) = cfg.target_len {
        while plan.len() > t_len {
            let Some(seg) = segments.pop() else {
                plan.truncate(t_len);
                break;
            };
            plan.truncate(seg.start);
            // also drop the transition frames that led into the removed sign
            while plan
                .last()
                .map(|f| f.label == Label::Transition)
                .unwrap_or(false)
            {
                plan.pop();
            }
            if let Some(last) = plan.last() {
                pos = last.wrist;
            }
        }
        if plan.len() < t_len {
            let fill = t_len - plan.len();
            push_rest(&mut plan, &mut rng, cfg, &mut pos, fill);
        }
        if segments.is_empty() {
            return Err(Error::data(format!(
                "target length {} leaves no room for any sign",
                t_len
            )));
        }
    }

    // realize the full skeleton
    let total = plan.len();
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0))
        .map_err(|e| Error::config(format!("bad noise sigma: {}", e)))?;
    let mut coords = Vec::with_capacity(total * body::JOINTS * 2);
    let mut labels = Vec::with_capacity(total);
    for (t, frame) in plan.iter().enumerate() {
        let mut joints = [(0.0f64, 0.0f64); body::JOINTS];
        let sway = 0.015 * (0.21 * t as f64).sin();
        joints[body::NOSE] = (0.0 + sway * 0.3, 0.9);
        joints[body::L_SHOULDER] = (-0.45, 0.55);
        joints[body::R_SHOULDER] = (0.45, 0.55);
        let l_wrist = (
            -0.6 + 0.02 * (0.3 * t as f64).sin(),
            -0.3 + 0.02 * (0.23 * t as f64).cos(),
        );
        joints[body::L_ELBOW] = mid_bend(joints[body::L_SHOULDER], l_wrist, (-0.08, 0.04));
        joints[body::L_WRIST] = l_wrist;
        let r_wrist = frame.wrist;
        joints[body::R_ELBOW] = mid_bend(joints[body::R_SHOULDER], r_wrist, (0.08, 0.04));
        joints[body::R_WRIST] = r_wrist;

        let drift_amp = if cfg.noise_sigma > 0.0 { DRIFT_AMP } else { 0.0 };
        let left_slots = hand_slots(None, HAND_SCALE, 0.0, 0.0);
        for (s, slot) in left_slots.iter().enumerate() {
            // mirror the relaxed hand for the left side
            joints[body::L_HAND + s] = (l_wrist.0 - slot.0, l_wrist.1 + slot.1);
        }
        let right_slots = hand_slots(frame.shape, HAND_SCALE, frame.drift, drift_amp);
        for (s, slot) in right_slots.iter().enumerate() {
            joints[body::R_HAND + s] = (r_wrist.0 + slot.0, r_wrist.1 + slot.1);
        }

        for (x, y) in joints {
            coords.push(x + noise.sample(&mut rng));
            coords.push(y + noise.sample(&mut rng));
        }
        labels.push(frame.label);
    }

    let seq = PoseSequence::new(body::JOINTS, coords, cfg.fps, Some(labels))?;
    Ok(GeneratedSequence { seq, segments })
}

fn mid_bend(a: (f64, f64), b: (f64, f64), bend: (f64, f64)) -> (f64, f64) {
    ((a.0 + b.0) / 2.0 + bend.0, (a.1 + b.1) / 2.0 + bend.1)
}

/// Rest frames: tiny sway around the current position, relaxed hand.
fn push_rest(
    plan: &mut Vec<FramePlan>,
    rng: &mut ChaCha8Rng,
    cfg: &GenConfig,
    pos: &mut (f64, f64),
    frames: usize,
) {
    if cfg.ambiguous_motion {
        push_roaming(plan, rng, cfg, pos, frames);
        return;
    }
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let anchor = *pos;
    for i in 0..frames {
        let wrist = (
            anchor.0 + 0.015 * (0.4 * i as f64 + phase).sin(),
            anchor.1 + 0.015 * (0.35 * i as f64 + phase).cos(),
        );
        plan.push(FramePlan {
            label: Label::Transition,
            wrist,
            shape: None,
            drift: 0.0,
        });
        *pos = wrist;
    }
}

/// Transition frames: smoothstep to `target` (slow ramp in and out),
/// relaxed hand.
fn push_transition(
    plan: &mut Vec<FramePlan>,
    rng: &mut ChaCha8Rng,
    cfg: &GenConfig,
    pos: &mut (f64, f64),
    target: (f64, f64),
    frames: usize,
) {
    if cfg.ambiguous_motion {
        push_roaming(plan, rng, cfg, pos, frames);
        return;
    }
    let from = *pos;
    for i in 0..frames {
        let t = smoothstep((i + 1) as f64 / frames as f64);
        let wrist = (
            from.0 + (target.0 - from.0) * t,
            from.1 + (target.1 - from.1) * t,
        );
        plan.push(FramePlan {
            label: Label::Transition,
            wrist,
            shape: None,
            drift: 0.0,
        });
        *pos = wrist;
    }
}

/// Sign-like motion carrying a transition label: same amplitude and
/// frequency statistics as real signs, relaxed hand. Used by
/// `ambiguous_motion` so velocity stops being a boundary cue.
fn push_roaming(
    plan: &mut Vec<FramePlan>,
    rng: &mut ChaCha8Rng,
    cfg: &GenConfig,
    pos: &mut (f64, f64),
    frames: usize,
) {
    if frames == 0 {
        return;
    }
    let fake = SignPrototype {
        gloss: 0,
        handshape: 0,
        amp: 0.22 + 0.12 * rng.random::<f64>(),
        freq_x: 0.8 + 0.5 * rng.random::<f64>(),
        freq_y: 1.1 + 0.6 * rng.random::<f64>(),
        phase_x: std::f64::consts::TAU * rng.random::<f64>(),
        phase_y: std::f64::consts::TAU * rng.random::<f64>(),
        orient: 0.0,
    };
    // play the opening of a nominally sign-length path so the per-frame
    // speed matches the sign speed distribution even over short stretches
    let nominal = rng.random_range(cfg.sign_frames_min..=cfg.sign_frames_max) as f64;
    let p0 = *pos;
    for i in 0..frames {
        let t = (i + 1) as f64 / nominal;
        let off = fake.path(t);
        let wrist = clamp_to_box((p0.0 + off.0, p0.1 + off.1));
        plan.push(FramePlan {
            label: Label::Transition,
            wrist,
            shape: None,
            drift: 0.0,
        });
        *pos = wrist;
    }
}

/// Generate the whole corpus; sequence `i` only depends on `(seed, i)`.
pub fn generate_pose_corpus(cfg: &GenConfig) -> Result<Vec<GeneratedSequence>> {
    (0..cfg.sequences).map(|i| generate_sequence(cfg, i)).collect()
}

#[derive(Debug, Clone)]
pub struct HandshapeGenConfig {
    pub classes: usize,
    pub samples_per_class: usize,
    pub seed: u64,
    pub noise_sigma: f64,
}

impl Default for HandshapeGenConfig {
    fn default() -> Self {
        HandshapeGenConfig {
            classes: 87,
            samples_per_class: 24,
            seed: 11,
            noise_sigma: 0.02,
        }
    }
}

/// Labeled 21-point hands drawn from the same geometry, noise level, and
/// renormalization as dominant-hand extraction from generated sequences.
pub fn generate_handshape_dataset(cfg: &HandshapeGenConfig) -> Result<HandshapeDataset> {
    if cfg.classes == 0 || cfg.classes > 3usize.pow(5) {
        return Err(Error::config(format!(
            "handshape class count {} outside 1..=243",
            cfg.classes
        )));
    }
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0))
        .map_err(|e| Error::config(format!("bad noise sigma: {}", e)))?;
    let mut samples = Vec::with_capacity(cfg.classes * cfg.samples_per_class);
    for class in 0..cfg.classes {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(class as u64 + 1);
        for _ in 0..cfg.samples_per_class {
            let (drift, amp) = if cfg.noise_sigma > 0.0 {
                (rng.random::<f64>(), DRIFT_AMP)
            } else {
                (0.0, 0.0)
            };
            let slots = hand_slots(Some(class), HAND_SCALE, drift, amp);
            let wrist = (noise.sample(&mut rng), noise.sample(&mut rng));
            let mut noisy = [(0.0, 0.0); 10];
            for (dst, src) in noisy.iter_mut().zip(slots) {
                *dst = (src.0 + noise.sample(&mut rng), src.1 + noise.sample(&mut rng));
            }
            let mut points = upsample_hand_points(wrist, &noisy);
            normalize_frame_points(&mut points);
            samples.push(HandshapeSample {
                class,
                points: points.iter().flat_map(|p| [p.0, p.1]).collect(),
            });
        }
    }
    Ok(HandshapeDataset {
        classes: cfg.classes,
        samples,
    })
}
