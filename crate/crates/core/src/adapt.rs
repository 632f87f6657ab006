//! Network-free arithmetic of teacher–student adaptation: confidence
//! thresholded pseudo-labels, EMA teacher updates, the weighted cosine
//! consistency loss, masked supervision and overlap metrics.

use crate::error::{Error, Result};
use crate::volume::{Dims, SegmentationMask, Volume3D};

pub const DEFAULT_ETA: f64 = 0.85;
pub const DEFAULT_MOMENTUM: f64 = 0.999;
pub const DEFAULT_CONSISTENCY_WEIGHTS: [f64; 4] = [0.2, 0.2, 0.3, 0.3];

/// Probability clamp applied before taking logarithms.
pub const BCE_EPSILON: f64 = 1e-7;

/// Per-voxel foreground probability in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    dims: Dims,
    data: Vec<f64>,
}

impl ProbabilityVolume {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        dims.check_nonzero()?;
        if data.len() != dims.len() {
            return Err(Error::invalid(format!(
                "probability volume {dims} needs {} values, got {}",
                dims.len(),
                data.len()
            )));
        }
        if let Some(p) = data.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
        Ok(Self { dims, data })
    }

    pub fn from_volume(vol: &Volume3D) -> Result<Self> {
        Self::new(vol.dims(), vol.data().iter().map(|&v| v as f64).collect())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PseudoLabel {
    Foreground,
    Background,
    Ignore,
}

impl PseudoLabel {
    /// Numeric code used when labels are stored as a volume.
    pub fn code(self) -> f32 {
        match self {
            PseudoLabel::Foreground => 1.0,
            PseudoLabel::Background => 0.0,
            PseudoLabel::Ignore => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabelVolume {
    dims: Dims,
    labels: Vec<PseudoLabel>,
}

impl PseudoLabelVolume {
    pub fn new(dims: Dims, labels: Vec<PseudoLabel>) -> Result<Self> {
        dims.check_nonzero()?;
        if labels.len() != dims.len() {
            return Err(Error::invalid("label count does not match dims"));
        }
        Ok(Self { dims, labels })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn labels(&self) -> &[PseudoLabel] {
        &self.labels
    }

    pub fn count(&self, label: PseudoLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Labels as `1` foreground, `0` background, `-1` ignore.
    pub fn to_volume(&self) -> Volume3D {
        Volume3D::new(self.dims, self.labels.iter().map(|l| l.code()).collect())
            .expect("label codes are finite")
    }
}

/// Which confident regions become labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelMode {
    /// `p ≥ η` is foreground, `p ≤ 1 − η` background.
    #[default]
    Symmetric,
    /// Only `p ≥ η` is labelled; everything else is ignored.
    ForegroundOnly,
}

pub fn pseudo_label(probs: &ProbabilityVolume, eta: f64) -> Result<PseudoLabelVolume> {
    pseudo_label_with(probs, eta, LabelMode::Symmetric)
}

/// Confidence-thresholded pseudo-labels. `eta` must lie in `(0.5, 1]` so the
/// foreground and background regions cannot overlap.
pub fn pseudo_label_with(
    probs: &ProbabilityVolume,
    eta: f64,
    mode: LabelMode,
) -> Result<PseudoLabelVolume> {
    check_eta(eta)?;
    Ok(label_with_cutoffs(probs, eta, 1.0 - eta, mode))
}

/// Pseudo-labels for probabilities stored as `f32` (e.g. read from MRC).
///
/// Both cutoffs are rounded to `f32` before comparing, so a stored `0.15`
/// lands on the background cutoff of `η = 0.85` just as the exact decimal
/// would.
pub fn pseudo_label_f32(vol: &Volume3D, eta: f64, mode: LabelMode) -> Result<PseudoLabelVolume> {
    check_eta(eta)?;
    let probs = ProbabilityVolume::from_volume(vol)?;
    let round = |x: f64| x as f32 as f64;
    Ok(label_with_cutoffs(&probs, round(eta), round(1.0 - eta), mode))
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.5 && eta <= 1.0) {
        return Err(Error::invalid(format!("eta must lie in (0.5, 1], got {eta}")));
    }
    Ok(())
}

fn label_with_cutoffs(
    probs: &ProbabilityVolume,
    foreground_min: f64,
    background_max: f64,
    mode: LabelMode,
) -> PseudoLabelVolume {
    let labels = probs
        .data
        .iter()
        .map(|&p| {
            if p >= foreground_min {
                PseudoLabel::Foreground
            } else if mode == LabelMode::Symmetric && p <= background_max {
                PseudoLabel::Background
            } else {
                PseudoLabel::Ignore
            }
        })
        .collect();
    PseudoLabelVolume {
        dims: probs.dims,
        labels,
    }
}

/// Flat parameter list of a teacher or student network.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `teacher' = m·teacher + (1 − m)·student`, element-wise.
pub fn ema_update(
    teacher: &ParameterVector,
    student: &ParameterVector,
    momentum: f64,
) -> Result<ParameterVector> {
    if teacher.len() != student.len() {
        return Err(Error::invalid(format!(
            "teacher has {} parameters, student {}",
            teacher.len(),
            student.len()
        )));
    }
    if !(0.0..=1.0).contains(&momentum) {
        return Err(Error::invalid(format!("momentum must lie in [0, 1], got {momentum}")));
    }
    Ok(ParameterVector(
        teacher
            .0
            .iter()
            .zip(&student.0)
            .map(|(&t, &s)| momentum * t + (1.0 - momentum) * s)
            .collect(),
    ))
}

/// One decoder feature map, flattened, with its logical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLevel {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl FeatureLevel {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::invalid(format!(
                "feature shape {shape:?} does not hold {} values",
                values.len()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn flat(values: Vec<f64>) -> Self {
        Self {
            shape: vec![values.len()],
            values,
        }
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// The four feature levels compared by the consistency loss.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEmbedding {
    pub levels: [FeatureLevel; 4],
}

impl FeatureEmbedding {
    pub fn new(levels: [FeatureLevel; 4]) -> Self {
        Self { levels }
    }

    /// Multiplies level `n` by `factors[n]`.
    pub fn rescaled(&self, factors: [f64; 4]) -> Self {
        let mut levels = self.levels.clone();
        for (level, f) in levels.iter_mut().zip(factors) {
            *level = level.scaled(f);
        }
        Self { levels }
    }
}

/// Non-negative per-level weights `λ₁..λ₄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyWeights([f64; 4]);

impl ConsistencyWeights {
    pub fn new(weights: [f64; 4]) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid(format!(
                "consistency weights must be finite and >= 0, got {weights:?}"
            )));
        }
        Ok(Self(weights))
    }

    pub fn values(&self) -> [f64; 4] {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl Default for ConsistencyWeights {
    fn default() -> Self {
        Self(DEFAULT_CONSISTENCY_WEIGHTS)
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("cosine of vectors with different lengths"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine undefined for a zero-norm feature level"));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// `Σ λₙ·(1 − cos(aₙ, bₙ))` over the four levels; lies in `[0, 2·Σλ]`.
pub fn consistency_loss(
    a: &FeatureEmbedding,
    b: &FeatureEmbedding,
    w: &ConsistencyWeights,
) -> Result<f64> {
    let mut loss = 0.0;
    for (n, ((la, lb), lambda)) in a.levels.iter().zip(&b.levels).zip(w.0).enumerate() {
        if la.shape != lb.shape {
            return Err(Error::invalid(format!(
                "feature level {n}: shape {:?} vs {:?}",
                la.shape, lb.shape
            )));
        }
        loss += lambda * (1.0 - cosine_similarity(&la.values, &lb.values)?);
    }
    Ok(loss)
}

/// Mean binary cross-entropy over voxels that are not [`PseudoLabel::Ignore`].
pub fn masked_supervision_loss(
    probs: &ProbabilityVolume,
    labels: &PseudoLabelVolume,
) -> Result<f64> {
    probs.dims.check_same(&labels.dims, "masked supervision")?;
    let (mut total, mut n) = (0.0, 0usize);
    for (&p, &l) in probs.data.iter().zip(&labels.labels) {
        let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        match l {
            PseudoLabel::Foreground => total -= p.ln(),
            PseudoLabel::Background => total -= (1.0 - p).ln(),
            PseudoLabel::Ignore => continue,
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("every voxel is ignored; loss undefined"));
    }
    Ok(total / n as f64)
}

/// Intersection and union counts for one class.
fn class_overlap(a: &SegmentationMask, b: &SegmentationMask, class: u8) -> (usize, usize, usize, usize) {
    let (mut inter, mut union, mut na, mut nb) = (0, 0, 0, 0);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (ia, ib) = (x == class, y == class);
        inter += usize::from(ia && ib);
        union += usize::from(ia || ib);
        na += usize::from(ia);
        nb += usize::from(ib);
    }
    (inter, union, na, nb)
}

/// `2|A∩B| / (|A| + |B|)` on the foreground; two empty masks score 1.
pub fn dice(a: &SegmentationMask, b: &SegmentationMask) -> Result<f64> {
    a.dims().check_same(&b.dims(), "dice")?;
    let (inter, _, na, nb) = class_overlap(a, b, 1);
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// IoU of one class; a class absent from both masks scores 1.
pub fn class_iou(a: &SegmentationMask, b: &SegmentationMask, class: u8) -> Result<f64> {
    a.dims().check_same(&b.dims(), "iou")?;
    let (inter, union, _, _) = class_overlap(a, b, class);
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

pub fn foreground_iou(a: &SegmentationMask, b: &SegmentationMask) -> Result<f64> {
    class_iou(a, b, 1)
}

/// Mean of foreground and background IoU.
pub fn miou(a: &SegmentationMask, b: &SegmentationMask) -> Result<f64> {
    Ok((class_iou(a, b, 1)? + class_iou(a, b, 0)?) / 2.0)
}
