//! Frame labels, pose sequences, and the transforms that prepare them.
//!
//! A pose sequence is `[frames, joints, 2]` of f64 coordinates plus optional
//! per-frame labels. Preparation for the segmentation network: normalize the
//! whole sequence into `[-1, 1]`, optionally mirror it for augmentation, and
//! stack position, velocity, and acceleration into a six-channel feature
//! sequence. The dominant-hand branch instead slices eleven body joints per
//! frame, upsamples them to a 21-joint hand, and renormalizes each frame to
//! its own bounding box so handshape is judged scale-free.

use crate::error::{Error, Result};
use crate::graphs::{body, body_mirror_map, hand};
use crate::tensor::Tensor;

/// Per-frame class. Indices are fixed: padding 0, transition 1, interior 2,
/// boundary 3. A segment is one boundary frame plus the interior run after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Padding,
    Transition,
    Interior,
    Boundary,
}

impl Label {
    pub const COUNT: usize = 4;
    pub const ALL: [Label; 4] = [
        Label::Padding,
        Label::Transition,
        Label::Interior,
        Label::Boundary,
    ];

    pub fn index(self) -> usize {
        match self {
            Label::Padding => 0,
            Label::Transition => 1,
            Label::Interior => 2,
            Label::Boundary => 3,
        }
    }

    pub fn from_index(i: usize) -> Result<Label> {
        Label::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::data(format!("label index {} out of range", i)))
    }

    pub fn to_char(self) -> char {
        match self {
            Label::Padding => 'P',
            Label::Transition => 'O',
            Label::Interior => 'I',
            Label::Boundary => 'B',
        }
    }

    pub fn from_char(c: char) -> Result<Label> {
        match c {
            'P' => Ok(Label::Padding),
            'O' => Ok(Label::Transition),
            'I' => Ok(Label::Interior),
            'B' => Ok(Label::Boundary),
            other => Err(Error::data(format!("unknown label character {:?}", other))),
        }
    }
}

pub fn labels_to_string(labels: &[Label]) -> String {
    labels.iter().map(|l| l.to_char()).collect()
}

pub fn labels_from_string(s: &str) -> Result<Vec<Label>> {
    s.chars().map(Label::from_char).collect()
}

/// Whether [`PoseSequence::normalize`] found usable extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizeOutcome {
    Scaled,
    /// Zero spatial extent; all coordinates were set to zero.
    Degenerate,
}

/// A skeleton clip: `[frames, joints, 2]` coordinates, capture rate, and
/// optional frame labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    joints: usize,
    coords: Vec<f64>,
    pub fps: f64,
    pub labels: Option<Vec<Label>>,
}

impl PoseSequence {
    pub fn new(
        joints: usize,
        coords: Vec<f64>,
        fps: f64,
        labels: Option<Vec<Label>>,
    ) -> Result<Self> {
        if joints == 0 {
            return Err(Error::data("pose sequence wants at least one joint"));
        }
        if coords.len() % (joints * 2) != 0 {
            return Err(Error::data(format!(
                "coordinate count {} is not a multiple of {} joints x 2",
                coords.len(),
                joints
            )));
        }
        let frames = coords.len() / (joints * 2);
        if let Some(ls) = &labels {
            if ls.len() != frames {
                return Err(Error::data(format!(
                    "{} labels for {} frames",
                    ls.len(),
                    frames
                )));
            }
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::data(format!("bad fps {}", fps)));
        }
        Ok(PoseSequence {
            joints,
            coords,
            fps,
            labels,
        })
    }

    pub fn frames(&self) -> usize {
        self.coords.len() / (self.joints * 2)
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn xy(&self, frame: usize, joint: usize) -> (f64, f64) {
        let i = (frame * self.joints + joint) * 2;
        (self.coords[i], self.coords[i + 1])
    }

    pub fn set_xy(&mut self, frame: usize, joint: usize, x: f64, y: f64) {
        let i = (frame * self.joints + joint) * 2;
        self.coords[i] = x;
        self.coords[i + 1] = y;
    }

    pub fn assert_finite(&self) -> Result<()> {
        if self.coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pose coordinates".into()));
        }
        Ok(())
    }

    /// Center the whole clip and scale uniformly so the tight bounding box
    /// over all frames fits `[-1, 1]` (longer side exactly). Idempotent up to
    /// rounding. Zero extent zeroes the clip and reports it.
    pub fn normalize(&mut self) -> NormalizeOutcome {
        match bbox(&self.coords) {
            Some((min_x, max_x, min_y, max_y)) => {
                let extent = (max_x - min_x).max(max_y - min_y);
                if extent <= 0.0 {
                    self.coords.iter_mut().for_each(|v| *v = 0.0);
                    return NormalizeOutcome::Degenerate;
                }
                let scale = 2.0 / extent;
                let cx = (min_x + max_x) / 2.0;
                let cy = (min_y + max_y) / 2.0;
                for pair in self.coords.chunks_exact_mut(2) {
                    pair[0] = (pair[0] - cx) * scale;
                    pair[1] = (pair[1] - cy) * scale;
                }
                NormalizeOutcome::Scaled
            }
            None => NormalizeOutcome::Degenerate,
        }
    }

    /// Mirror left-right: negate x and swap paired joints. Labels are
    /// untouched. Body topology only.
    pub fn horizontal_flip(&mut self) -> Result<()> {
        if self.joints != body::JOINTS {
            return Err(Error::data(format!(
                "horizontal flip wants {} body joints, got {}",
                body::JOINTS,
                self.joints
            )));
        }
        let map = body_mirror_map();
        let j = self.joints;
        let mut frame = vec![0.0; j * 2];
        for f in 0..self.frames() {
            let src = &mut self.coords[f * j * 2..(f + 1) * j * 2];
            frame.copy_from_slice(src);
            for (joint, &m) in map.iter().enumerate() {
                src[m * 2] = -frame[joint * 2];
                src[m * 2 + 1] = frame[joint * 2 + 1];
            }
        }
        Ok(())
    }

    /// Zero-pad (label [`Label::Padding`]) or truncate to exactly `t_max`
    /// frames.
    pub fn pad_to_length(&mut self, t_max: usize) {
        let frames = self.frames();
        let width = self.joints * 2;
        if frames < t_max {
            self.coords.resize(t_max * width, 0.0);
            if let Some(ls) = &mut self.labels {
                ls.resize(t_max, Label::Padding);
            }
        } else if frames > t_max {
            self.coords.truncate(t_max * width);
            if let Some(ls) = &mut self.labels {
                ls.truncate(t_max);
            }
        }
    }

    /// Position, velocity, acceleration per joint: `[frames, joints, 6]`.
    /// Velocity and acceleration are backward differences with zero first
    /// elements, so a frozen skeleton yields zero motion channels.
    pub fn kinematic_features(&self) -> Result<Tensor> {
        let t = self.frames();
        let j = self.joints;
        let mut data = vec![0.0; t * j * 6];
        for f in 0..t {
            for jj in 0..j {
                let (x, y) = self.xy(f, jj);
                let (vx, vy) = if f == 0 {
                    (0.0, 0.0)
                } else {
                    let (px, py) = self.xy(f - 1, jj);
                    (x - px, y - py)
                };
                let (ax, ay) = if f <= 1 {
                    (0.0, 0.0)
                } else {
                    let (px, py) = self.xy(f - 1, jj);
                    let (qx, qy) = self.xy(f - 2, jj);
                    (x - px - (px - qx), y - py - (py - qy))
                };
                let base = (f * j + jj) * 6;
                data[base..base + 6].copy_from_slice(&[x, y, vx, vy, ax, ay]);
            }
        }
        Tensor::new(vec![t, j, 6], data)
    }
}

fn bbox(coords: &[f64]) -> Option<(f64, f64, f64, f64)> {
    if coords.is_empty() {
        return None;
    }
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for pair in coords.chunks_exact(2) {
        min_x = min_x.min(pair[0]);
        max_x = max_x.max(pair[0]);
        min_y = min_y.min(pair[1]);
        max_y = max_y.max(pair[1]);
    }
    Some((min_x, max_x, min_y, max_y))
}

/// Expand the wrist plus ten two-keypoint finger slots into the 21-joint
/// hand layout: per finger, base and tip are kept and two joints are placed
/// at one and two thirds along the segment.
pub fn upsample_hand_points(wrist: (f64, f64), slots: &[(f64, f64); 10]) -> [(f64, f64); 21] {
    let lerp = |a: (f64, f64), b: (f64, f64), t: f64| (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
    let mut out = [(0.0, 0.0); 21];
    out[hand::WRIST] = wrist;
    for f in 0..5 {
        let base = slots[2 * f];
        let tip = slots[2 * f + 1];
        let j = hand::finger_base(f);
        out[j] = base;
        out[j + 1] = lerp(base, tip, 1.0 / 3.0);
        out[j + 2] = lerp(base, tip, 2.0 / 3.0);
        out[j + 3] = tip;
    }
    out
}

/// Normalize a single frame's points into `[-1, 1]` around their own tight
/// bounding box. Returns false (and zeroes the points) on zero extent.
pub fn normalize_frame_points(points: &mut [(f64, f64)]) -> bool {
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for p in points.iter() {
        min_x = min_x.min(p.0);
        max_x = max_x.max(p.0);
        min_y = min_y.min(p.1);
        max_y = max_y.max(p.1);
    }
    let extent = (max_x - min_x).max(max_y - min_y);
    if !(extent > 0.0) || !extent.is_finite() {
        points.iter_mut().for_each(|p| *p = (0.0, 0.0));
        return false;
    }
    let scale = 2.0 / extent;
    let cx = (min_x + max_x) / 2.0;
    let cy = (min_y + max_y) / 2.0;
    for p in points.iter_mut() {
        *p = ((p.0 - cx) * scale, (p.1 - cy) * scale);
    }
    true
}

/// Slice the dominant (right) hand out of a body sequence: wrist plus the
/// ten right-hand slots, upsampled to 21 joints and renormalized per frame.
/// Labels are dropped; degenerate frames come out as all zeros.
pub fn extract_dominant_hand(body_seq: &PoseSequence) -> Result<PoseSequence> {
    if body_seq.joints() != body::JOINTS {
        return Err(Error::data(format!(
            "hand extraction wants {} body joints, got {}",
            body::JOINTS,
            body_seq.joints()
        )));
    }
    let t = body_seq.frames();
    let mut coords = Vec::with_capacity(t * hand::JOINTS * 2);
    for f in 0..t {
        let wrist = body_seq.xy(f, body::R_WRIST);
        let mut slots = [(0.0, 0.0); 10];
        for (s, slot) in slots.iter_mut().enumerate() {
            *slot = body_seq.xy(f, body::R_HAND + s);
        }
        let mut points = upsample_hand_points(wrist, &slots);
        normalize_frame_points(&mut points);
        for p in points {
            coords.push(p.0);
            coords.push(p.1);
        }
    }
    PoseSequence::new(hand::JOINTS, coords, body_seq.fps, None)
}

/// Position-only features for the hand branch: `[frames, 21, 2]`.
pub fn hand_features(hand_seq: &PoseSequence) -> Result<Tensor> {
    if hand_seq.joints() != hand::JOINTS {
        return Err(Error::data(format!(
            "hand features want {} joints, got {}",
            hand::JOINTS,
            hand_seq.joints()
        )));
    }
    Tensor::new(
        vec![hand_seq.frames(), hand::JOINTS, 2],
        hand_seq.coords().to_vec(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_seq(frames: usize) -> PoseSequence {
        // joints spread over a 4 x 3 box offset from the origin
        let mut coords = Vec::new();
        for f in 0..frames {
            for j in 0..body::JOINTS {
                let x = 10.0 + (j % 5) as f64 + f as f64 * 0.1;
                let y = -3.0 + (j / 5) as f64;
                coords.push(x);
                coords.push(y);
            }
        }
        PoseSequence::new(body::JOINTS, coords, 25.0, None).unwrap()
    }

    #[test]
    fn label_codec_roundtrip() {
        for l in Label::ALL {
            assert_eq!(Label::from_index(l.index()).unwrap(), l);
            assert_eq!(Label::from_char(l.to_char()).unwrap(), l);
        }
        assert_eq!(Label::Boundary.index(), 3);
        assert_eq!(Label::Padding.index(), 0);
        assert!(Label::from_index(4).is_err());
        assert!(Label::from_char('X').is_err());
        assert!(labels_from_string("BIO P").is_err());
        assert_eq!(labels_to_string(&labels_from_string("BIIOP").unwrap()), "BIIOP");
    }

    #[test]
    fn constructor_validates_counts() {
        assert!(PoseSequence::new(3, vec![0.0; 5], 25.0, None).is_err());
        assert!(PoseSequence::new(
            2,
            vec![0.0; 8],
            25.0,
            Some(vec![Label::Boundary])
        )
        .is_err());
        assert!(PoseSequence::new(2, vec![0.0; 8], 0.0, None).is_err());
        assert!(PoseSequence::new(2, vec![0.0; 8], f64::NAN, None).is_err());
    }

    #[test]
    fn normalize_centers_and_bounds() {
        let mut seq = grid_seq(4);
        assert_eq!(seq.normalize(), NormalizeOutcome::Scaled);
        let (min_x, max_x, min_y, max_y) = bbox(seq.coords()).unwrap();
        assert!(min_x >= -1.0 - 1e-12 && max_x <= 1.0 + 1e-12);
        assert!(min_y >= -1.0 - 1e-12 && max_y <= 1.0 + 1e-12);
        // longest side spans exactly [-1, 1]
        let w = max_x - min_x;
        let h = max_y - min_y;
        assert!((w.max(h) - 2.0).abs() < 1e-12);
        assert!((min_x + max_x).abs() < 1e-12);
        assert!((min_y + max_y).abs() < 1e-12);
    }

    #[test]
    fn normalize_is_idempotent() {
        let mut seq = grid_seq(3);
        seq.normalize();
        let once = seq.coords().to_vec();
        seq.normalize();
        for (a, b) in seq.coords().iter().zip(&once) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_degenerate_zeroes() {
        let mut seq = PoseSequence::new(2, vec![5.0; 12], 25.0, None).unwrap();
        assert_eq!(seq.normalize(), NormalizeOutcome::Degenerate);
        assert!(seq.coords().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flip_is_an_involution() {
        let orig = grid_seq(3);
        let mut seq = orig.clone();
        seq.horizontal_flip().unwrap();
        assert_ne!(seq, orig);
        seq.horizontal_flip().unwrap();
        for (a, b) in seq.coords().iter().zip(orig.coords()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn flip_swaps_sides_and_negates_x() {
        let mut seq = grid_seq(1);
        let before_l = seq.xy(0, body::L_WRIST);
        let before_r = seq.xy(0, body::R_WRIST);
        seq.horizontal_flip().unwrap();
        assert_eq!(seq.xy(0, body::R_WRIST), (-before_l.0, before_l.1));
        assert_eq!(seq.xy(0, body::L_WRIST), (-before_r.0, before_r.1));
    }

    #[test]
    fn flip_commutes_with_normalize() {
        let orig = grid_seq(5);
        let mut a = orig.clone();
        a.normalize();
        a.horizontal_flip().unwrap();
        let mut b = orig.clone();
        b.horizontal_flip().unwrap();
        b.normalize();
        for (x, y) in a.coords().iter().zip(b.coords()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn kinematics_first_frames_are_zero_motion() {
        let mut seq = PoseSequence::new(1, vec![0.0, 0.0, 1.0, 0.5, 3.0, 1.5], 25.0, None).unwrap();
        seq.fps = 25.0;
        let feats = seq.kinematic_features().unwrap();
        assert_eq!(feats.shape(), &[3, 1, 6]);
        let d = feats.data();
        // frame 0: zero velocity and acceleration
        assert_eq!(&d[0..6], &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        // frame 1: v = (1, 0.5), a = 0
        assert_eq!(&d[6..12], &[1.0, 0.5, 1.0, 0.5, 0.0, 0.0]);
        // frame 2: v = (2, 1), a = v2 - v1 = (1, 0.5)
        assert_eq!(&d[12..18], &[3.0, 1.5, 2.0, 1.0, 1.0, 0.5]);
    }

    #[test]
    fn frozen_skeleton_has_zero_motion_channels() {
        let coords: Vec<f64> = (0..4).flat_map(|_| vec![1.0, 2.0, 3.0, 4.0]).collect();
        let seq = PoseSequence::new(2, coords, 25.0, None).unwrap();
        let feats = seq.kinematic_features().unwrap();
        for f in 0..4 {
            for j in 0..2 {
                let base = (f * 2 + j) * 6;
                assert_eq!(&feats.data()[base + 2..base + 6], &[0.0; 4]);
            }
        }
    }

    #[test]
    fn pad_extends_with_padding_labels_and_truncates() {
        let mut seq = PoseSequence::new(
            1,
            vec![1.0, 2.0, 3.0, 4.0],
            25.0,
            Some(vec![Label::Boundary, Label::Interior]),
        )
        .unwrap();
        seq.pad_to_length(4);
        assert_eq!(seq.frames(), 4);
        assert_eq!(seq.xy(3, 0), (0.0, 0.0));
        assert_eq!(
            seq.labels.as_ref().unwrap()[2..],
            [Label::Padding, Label::Padding]
        );
        seq.pad_to_length(1);
        assert_eq!(seq.frames(), 1);
        assert_eq!(seq.labels.as_ref().unwrap().as_slice(), [Label::Boundary]);
    }

    #[test]
    fn hand_extraction_shape_and_normalization() {
        let mut seq = grid_seq(2);
        // make the right hand non-degenerate with a clear spread
        for s in 0..10 {
            seq.set_xy(0, body::R_HAND + s, s as f64, (s % 3) as f64);
            seq.set_xy(1, body::R_HAND + s, s as f64 * 0.5, 1.0);
        }
        let hand_seq = extract_dominant_hand(&seq).unwrap();
        assert_eq!(hand_seq.joints(), hand::JOINTS);
        assert_eq!(hand_seq.frames(), 2);
        for f in 0..2 {
            for j in 0..hand::JOINTS {
                let (x, y) = hand_seq.xy(f, j);
                assert!(x >= -1.0 - 1e-12 && x <= 1.0 + 1e-12);
                assert!(y >= -1.0 - 1e-12 && y <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn upsampled_finger_joints_are_collinear() {
        let wrist = (0.0, 0.0);
        let mut slots = [(0.0, 0.0); 10];
        for f in 0..5 {
            slots[2 * f] = (f as f64, 1.0);
            slots[2 * f + 1] = (f as f64 + 3.0, 4.0);
        }
        let pts = upsample_hand_points(wrist, &slots);
        assert_eq!(pts[hand::WRIST], wrist);
        for f in 0..5 {
            let j = hand::finger_base(f);
            let (bx, by) = pts[j];
            let (tx, ty) = pts[j + 3];
            let third = ((tx - bx) / 3.0, (ty - by) / 3.0);
            assert!((pts[j + 1].0 - (bx + third.0)).abs() < 1e-12);
            assert!((pts[j + 1].1 - (by + third.1)).abs() < 1e-12);
            assert!((pts[j + 2].0 - (bx + 2.0 * third.0)).abs() < 1e-12);
            assert!((pts[j + 2].1 - (by + 2.0 * third.1)).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_hand_frame_is_zeroed() {
        let seq = PoseSequence::new(
            body::JOINTS,
            vec![7.0; body::JOINTS * 2],
            25.0,
            None,
        )
        .unwrap();
        let hand_seq = extract_dominant_hand(&seq).unwrap();
        assert!(hand_seq.coords().iter().all(|&v| v == 0.0));
    }
}
