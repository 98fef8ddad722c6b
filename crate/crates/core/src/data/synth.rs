//! Synthetic target/OOD images built from shared nuisance patterns.
//!
//! A target image of class `y` is
//! `0.5 + template_amp * T_y + nuisance_amp * N_m + noise`, where `T_y` is a
//! smooth class template and `N_m` a high-frequency pattern. With probability
//! `rho` the pattern index is drawn from the patterns linked to `y`
//! (`m % c == y`), otherwise uniformly from the dictionary. An OOD image
//! belongs to one of `ood_classes` hidden classes `q`: it carries that class's
//! own template, orthogonal to every target template, and draws its pattern by
//! the same rule with `q % c`. Templates and dictionary come from fixed seeds,
//! so every split and every run sees the same patterns.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::{Dataset, OOD_LABEL};
use crate::error::{OatError, Result};
use crate::numerics::RngState;

const TEMPLATE_SEED: u64 = 0x7e3a_11c5;
const DICTIONARY_SEED: u64 = 0x51ce_0d1c;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Dictionary size M.
    pub num_nuisance: usize,
    /// Hidden classes of the OOD split, each with its own template.
    pub ood_classes: usize,
    /// Probability of drawing a class-linked nuisance pattern.
    pub rho: f64,
    pub template_amp: f64,
    pub nuisance_amp: f64,
    pub noise_std: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_ood: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_classes: 4,
            channels: 3,
            height: 16,
            width: 16,
            num_nuisance: 32,
            ood_classes: 8,
            rho: 0.2,
            template_amp: 0.12,
            nuisance_amp: 0.12,
            noise_std: 0.08,
            n_train: 2000,
            n_test: 1000,
            n_ood: 4000,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_classes > 1000 {
            return Err(OatError::invalid("num_classes must lie in [2, 1000]"));
        }
        if self.channels == 0 || self.height < 2 || self.width < 2 {
            return Err(OatError::invalid("image must be at least 1x2x2"));
        }
        if self.num_nuisance < self.num_classes {
            return Err(OatError::invalid("need at least one nuisance pattern per class"));
        }
        if self.ood_classes == 0 {
            return Err(OatError::invalid("ood_classes must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(OatError::invalid("rho must lie in [0, 1]"));
        }
        for (name, v) in [("template_amp", self.template_amp), ("nuisance_amp", self.nuisance_amp), ("noise_std", self.noise_std)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(OatError::invalid(format!("{name} must be a non-negative number")));
            }
        }
        Ok(())
    }

    fn pixels(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// Train, test and OOD splits of one generation.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSets {
    pub train: Dataset,
    pub test: Dataset,
    pub ood: Dataset,
}

/// Orthonormal basis of the smooth subspace: per channel the constant and the
/// cosine/sine waves with at most two cycles along each axis.
fn smooth_basis(spec: &SynthSpec) -> Vec<Vec<f64>> {
    let (h, w) = (spec.height as f64, spec.width as f64);
    let mut raw = Vec::new();
    for ch in 0..spec.channels {
        for fy in 0..3 {
            for fx in 0..3 {
                for wave in [libm::cos, libm::sin] {
                    let mut v = vec![0.0; spec.pixels()];
                    for i in 0..spec.height {
                        for j in 0..spec.width {
                            let phase = 2.0 * PI * (fy as f64 * i as f64 / h + fx as f64 * j as f64 / w);
                            v[(ch * spec.height + i) * spec.width + j] = wave(phase);
                        }
                    }
                    raw.push(v);
                }
            }
        }
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut v in raw {
        for b in &basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let norm = libm::sqrt(dot(&v, &v));
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Smooth zero-mean class templates with max-abs 1, one per class.
pub fn templates(spec: &SynthSpec) -> Vec<Vec<f64>> {
    smooth_templates(spec, spec.num_classes, 0)
}

/// Templates of the hidden OOD classes: smooth fields drawn independently of
/// [`templates`], with the span of the target templates projected out.
pub fn ood_templates(spec: &SynthSpec) -> Vec<Vec<f64>> {
    let mut span: Vec<Vec<f64>> = Vec::new();
    for mut t in templates(spec) {
        project_out(&mut t, &span);
        let n = dot(&t, &t).sqrt();
        t.iter_mut().for_each(|x| *x /= n);
        span.push(t);
    }
    let mut out = smooth_templates(spec, spec.ood_classes, 1);
    for q in &mut out {
        project_out(q, &span);
        normalize_max_abs(q);
    }
    out
}

fn project_out(v: &mut [f64], orthonormal: &[Vec<f64>]) {
    for u in orthonormal {
        let c = dot(v, u);
        v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
    }
}

fn smooth_templates(spec: &SynthSpec, count: usize, family: u64) -> Vec<Vec<f64>> {
    let mut rng = RngState::new(TEMPLATE_SEED, (count as u64) << 1 | family);
    let basis = smooth_basis(spec);
    (0..count)
        .map(|_| {
            let mut t = vec![0.0; spec.pixels()];
            for b in &basis {
                let mean = b.iter().sum::<f64>() / b.len() as f64;
                if mean.abs() > 1e-9 {
                    continue;
                }
                let a = rng.normal();
                t.iter_mut().zip(b).for_each(|(x, y)| *x += a * y);
            }
            normalize_max_abs(&mut t);
            t
        })
        .collect()
}

/// High-frequency patterns: checkerboards and stripes under random 4x4-block
/// and per-channel sign masks, with the smooth subspace projected out and
/// scaled to max-abs 1.
pub fn nuisance_dictionary(spec: &SynthSpec) -> Vec<Vec<f64>> {
    let mut rng = RngState::new(DICTIONARY_SEED, spec.num_nuisance as u64);
    let basis = smooth_basis(spec);
    let block = 4;
    let (bh, bw) = (spec.height.div_ceil(block), spec.width.div_ceil(block));
    (0..spec.num_nuisance)
        .map(|m| {
            let blocks: Vec<f64> = (0..bh * bw).map(|_| rng.rademacher()).collect();
            let chans: Vec<f64> = (0..spec.channels).map(|_| rng.rademacher()).collect();
            let mut p = vec![0.0; spec.pixels()];
            for ch in 0..spec.channels {
                for i in 0..spec.height {
                    for j in 0..spec.width {
                        let base = match m % 3 {
                            0 => parity(i + j),
                            1 => parity(i),
                            _ => parity(j),
                        };
                        p[(ch * spec.height + i) * spec.width + j] = base * blocks[(i / block) * bw + j / block] * chans[ch];
                    }
                }
            }
            for b in &basis {
                let c = dot(&p, b);
                p.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            normalize_max_abs(&mut p);
            p
        })
        .collect()
}

fn parity(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn normalize_max_abs(v: &mut [f64]) {
    let m = v.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x /= m);
    }
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    templates: Vec<Vec<f64>>,
    ood_templates: Vec<Vec<f64>>,
    dictionary: Vec<Vec<f64>>,
}

impl Generator<'_> {
    fn nuisance_index(&self, class: usize, rng: &mut RngState) -> usize {
        let c = self.spec.num_classes;
        if rng.bernoulli(self.spec.rho) {
            let linked = (self.spec.num_nuisance - class).div_ceil(c);
            class + c * rng.index(linked)
        } else {
            rng.index(self.spec.num_nuisance)
        }
    }

    fn image(&self, template: &[f64], class: usize, rng: &mut RngState, out: &mut Vec<u8>) {
        let s = self.spec;
        let nuisance = &self.dictionary[self.nuisance_index(class, rng)];
        for k in 0..s.pixels() {
            let v = 0.5 + s.template_amp * template[k] + s.nuisance_amp * nuisance[k] + s.noise_std * rng.normal();
            out.push(libm::round(v.clamp(0.0, 1.0) * 255.0) as u8);
        }
    }

    fn split(&self, n: usize, ood: bool, name: String, rng: &mut RngState) -> Result<Dataset> {
        let s = self.spec;
        let mut images = Vec::with_capacity(n * s.pixels());
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            if ood {
                let q = rng.index(s.ood_classes);
                self.image(&self.ood_templates[q], q % s.num_classes, rng, &mut images);
                labels.push(OOD_LABEL);
            } else {
                let y = rng.index(s.num_classes);
                self.image(&self.templates[y], y, rng, &mut images);
                labels.push(y as u16);
            }
        }
        Dataset::new(images, labels, (s.channels, s.height, s.width), s.num_classes, name)
    }
}

/// Generates the three splits; each split uses its own stream of `rng`.
pub fn gen_synthetic(spec: &SynthSpec, rng: &RngState) -> Result<SynthSets> {
    spec.validate()?;
    let g = Generator { spec, templates: templates(spec), ood_templates: ood_templates(spec), dictionary: nuisance_dictionary(spec) };
    Ok(SynthSets {
        train: g.split(spec.n_train, false, "synth-train".into(), &mut rng.split(1))?,
        test: g.split(spec.n_test, false, "synth-test".into(), &mut rng.split(2))?,
        ood: g.split(spec.n_ood, true, "synth-ood".into(), &mut rng.split(3))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gather;

    #[test]
    fn pure_templates_are_separable() {
        let spec = SynthSpec { rho: 0.0, noise_std: 0.0, nuisance_amp: 0.0, n_train: 200, n_test: 10, n_ood: 10, ..Default::default() };
        let sets = gen_synthetic(&spec, &RngState::from_seed(3)).unwrap();
        let t = templates(&spec);
        let x = sets.train.normalized();
        let d = sets.train.image_len();
        for i in 0..sets.train.len() {
            let img = &x[i * d..(i + 1) * d];
            let y = sets.train.label(i).unwrap();
            for k in 0..d {
                let expected = libm::round((0.5 + spec.template_amp * t[y][k]) * 255.0) / 255.0;
                assert_eq!(img[k], expected);
            }
            let best = (0..spec.num_classes)
                .map(|c| {
                    let e: f64 = img.iter().zip(&t[c]).map(|(p, q)| (p - 0.5 - spec.template_amp * q).powi(2)).sum();
                    (e, c)
                })
                .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a });
            assert_eq!(best.1, y);
        }
    }

    #[test]
    fn ood_templates_are_distinct_from_target_templates() {
        let spec = SynthSpec::default();
        let (t, o) = (templates(&spec), ood_templates(&spec));
        assert_eq!(o.len(), spec.ood_classes);
        let cos = |a: &[f64], b: &[f64]| dot(a, b) / (dot(a, a) * dot(b, b)).sqrt();
        for q in &o {
            assert!((q.iter().fold(0.0f64, |m, v| m.max(v.abs())) - 1.0).abs() < 1e-12);
            for tc in &t {
                assert!(cos(q, tc).abs() < 1e-9, "{}", cos(q, tc));
            }
        }
    }

    #[test]
    fn ood_images_sit_away_from_every_target_class() {
        let spec = SynthSpec { n_train: 400, n_test: 1, n_ood: 400, ..Default::default() };
        let sets = gen_synthetic(&spec, &RngState::from_seed(9)).unwrap();
        assert!(sets.ood.is_unlabeled());
        let t = templates(&spec);
        let d = sets.ood.image_len();
        let proj = |img: &[f64], c: usize| img.iter().zip(&t[c]).map(|(p, q)| (p - 0.5) * q).sum::<f64>() / dot(&t[c], &t[c]).sqrt();
        let x = gather(&sets.train, (0..sets.train.len()).collect()).inputs;
        let own: f64 = x.chunks(d).enumerate().map(|(i, img)| proj(img, sets.train.label(i).unwrap())).sum::<f64>() / sets.train.len() as f64;
        let xo = gather(&sets.ood, (0..sets.ood.len()).collect()).inputs;
        for c in 0..spec.num_classes {
            let mean = xo.chunks(d).map(|img| proj(img, c)).sum::<f64>() / sets.ood.len() as f64;
            assert!(mean.abs() < 0.25 * own, "class {c}: {mean} vs {own}");
        }
    }

    #[test]
    fn generation_is_deterministic_and_shared() {
        let spec = SynthSpec { n_train: 20, n_test: 5, n_ood: 20, ..Default::default() };
        let a = gen_synthetic(&spec, &RngState::from_seed(1)).unwrap();
        let b = gen_synthetic(&spec, &RngState::from_seed(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(nuisance_dictionary(&spec), nuisance_dictionary(&spec));
        let c = gen_synthetic(&spec, &RngState::from_seed(2)).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn dictionary_is_high_frequency_and_balanced() {
        let spec = SynthSpec::default();
        let dict = nuisance_dictionary(&spec);
        assert_eq!(dict.len(), 32);
        for p in &dict {
            assert!(p.iter().all(|v| v.abs() <= 1.0 + 1e-12));
            assert!(p.iter().sum::<f64>().abs() < 1e-9);
            let energy = dot(p, p) / p.len() as f64;
            assert!(energy > 0.3, "projection left too little of the pattern: {energy}");
        }
        for t in templates(&spec) {
            for p in &dict {
                assert!(dot(&t, p).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(SynthSpec { rho: 1.5, ..Default::default() }.validate().is_err());
        assert!(SynthSpec { num_nuisance: 3, ..Default::default() }.validate().is_err());
        assert!(SynthSpec { noise_std: -1.0, ..Default::default() }.validate().is_err());
    }
}
