//! Image datasets, batches, label utilities and the byte-level file formats.

mod formats;
mod mining;
mod synth;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{OatError, Result};
use crate::nn::InputShape;
use crate::numerics::{ProbVector, RngState};

pub use formats::{decode_cifar10, decode_oatd, encode_cifar10, encode_oatd, CIFAR_RECORD};
pub use mining::{mine_ood, MiningResult};
pub use synth::{gen_synthetic, nuisance_dictionary, templates, SynthSets, SynthSpec};

/// Label value marking an unlabeled OOD sample.
pub const OOD_LABEL: u16 = 0xFFFF;

/// 8-bit images `[count][channel][row][col]` with class labels or [`OOD_LABEL`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    images: Vec<u8>,
    labels: Vec<u16>,
    channels: usize,
    height: usize,
    width: usize,
    num_classes: usize,
    pub name: String,
}

impl Dataset {
    pub fn new(
        images: Vec<u8>,
        labels: Vec<u16>,
        (channels, height, width): (usize, usize, usize),
        num_classes: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        let size = channels * height * width;
        if size == 0 {
            return Err(OatError::invalid("image shape is empty"));
        }
        if images.len() != labels.len() * size {
            return Err(OatError::ShapeMismatch { expected: labels.len() * size, got: images.len() });
        }
        if num_classes == 0 || num_classes >= OOD_LABEL as usize {
            return Err(OatError::invalid(format!("unsupported class count {num_classes}")));
        }
        if let Some(&l) = labels.iter().find(|&&l| l != OOD_LABEL && l as usize >= num_classes) {
            return Err(OatError::LabelOutOfRange { label: l as usize, num_classes });
        }
        Ok(Dataset { images, labels, channels, height, width, num_classes, name: name.into() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn shape(&self) -> InputShape {
        InputShape::image(self.channels, self.height, self.width)
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let s = self.image_len();
        &self.images[i * s..(i + 1) * s]
    }

    pub fn images(&self) -> &[u8] {
        &self.images
    }

    pub fn raw_labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn is_ood(&self, i: usize) -> bool {
        self.labels[i] == OOD_LABEL
    }

    /// Every sample carries the OOD sentinel.
    pub fn is_unlabeled(&self) -> bool {
        self.labels.iter().all(|&l| l == OOD_LABEL)
    }

    /// Class index of sample `i`; reading a sentinel is an error.
    pub fn label(&self, i: usize) -> Result<usize> {
        match self.labels[i] {
            OOD_LABEL => Err(OatError::SentinelLabel(i)),
            l => Ok(l as usize),
        }
    }

    pub fn labels(&self) -> Result<Vec<usize>> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    /// Pixels of sample `i` scaled to [0, 1], appended to `out`.
    pub fn push_normalized(&self, i: usize, out: &mut Vec<f64>) {
        out.extend(self.image(i).iter().map(|&b| b as f64 / 255.0));
    }

    /// All images scaled to [0, 1].
    pub fn normalized(&self) -> Vec<f64> {
        self.images.iter().map(|&b| b as f64 / 255.0).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut images = Vec::with_capacity(indices.len() * self.image_len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            images.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Dataset { images, labels, ..self.empty_like() }
    }

    /// First `n` samples (or all if fewer).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Same images with every label replaced by the OOD sentinel.
    pub fn unlabeled(&self) -> Dataset {
        let mut d = self.clone();
        d.labels.iter_mut().for_each(|l| *l = OOD_LABEL);
        d
    }

    /// Same images with new labels (class indices or sentinels).
    pub fn with_labels(&self, labels: Vec<u16>) -> Result<Dataset> {
        Dataset::new(self.images.clone(), labels, self.dims(), self.num_classes, self.name.clone())
    }

    fn empty_like(&self) -> Dataset {
        Dataset {
            images: Vec::new(),
            labels: Vec::new(),
            channels: self.channels,
            height: self.height,
            width: self.width,
            num_classes: self.num_classes,
            name: self.name.clone(),
        }
    }

    /// Appends the samples of `other`, which must share the image shape.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if other.dims() != self.dims() {
            return Err(OatError::ShapeMismatch { expected: self.image_len(), got: other.image_len() });
        }
        let mut d = self.empty_like();
        d.num_classes = self.num_classes.max(other.num_classes);
        d.images = [self.images.as_slice(), other.images.as_slice()].concat();
        d.labels = [self.labels.as_slice(), other.labels.as_slice()].concat();
        Ok(d)
    }
}

/// Normalized inputs drawn from a dataset with their source indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Class labels of the batch; fails on OOD samples.
    pub fn classes(&self, d: &Dataset) -> Result<Vec<usize>> {
        self.indices.iter().map(|&i| d.label(i)).collect()
    }
}

/// Uniform draw of `size` samples with replacement.
pub fn sample_batch(d: &Dataset, size: usize, rng: &mut RngState) -> Result<Batch> {
    if d.is_empty() {
        return Err(OatError::EmptyDataset(d.name.clone()));
    }
    if size == 0 {
        return Err(OatError::invalid("batch size must be positive"));
    }
    let indices: Vec<usize> = (0..size).map(|_| rng.index(d.len())).collect();
    Ok(gather(d, indices))
}

/// Normalized inputs of the given samples.
pub fn gather(d: &Dataset, indices: Vec<usize>) -> Batch {
    let mut inputs = Vec::with_capacity(indices.len() * d.image_len());
    for &i in &indices {
        d.push_normalized(i, &mut inputs);
    }
    Batch { inputs, indices }
}

/// The uniform label `[1/c, ..., 1/c]`.
pub fn uniform_label(c: usize) -> Result<ProbVector> {
    if c < 2 {
        return Err(OatError::invalid("uniform label needs at least two classes"));
    }
    Ok(ProbVector::uniform(c))
}

/// Copy with i.i.d. uniform labels in `[0, c)`; images are untouched.
pub fn randomize_labels(d: &Dataset, rng: &mut RngState) -> Result<Dataset> {
    let labels = (0..d.len()).map(|_| rng.index(d.num_classes()) as u16).collect();
    let mut out = d.with_labels(labels)?;
    out.name = format!("{}-random-labels", d.name);
    Ok(out)
}
