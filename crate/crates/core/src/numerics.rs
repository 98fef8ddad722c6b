//! Deterministic random streams and numerically stable scalar kernels.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{OatError, Result};

const TWO_PI: f64 = 2.0 * core::f64::consts::PI;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// The generator is ChaCha8 keyed by `seed` and positioned on ChaCha stream
/// `stream_id`. [`RngState::split`] derives children from the identity only,
/// never from the current position, so a child is the same no matter how much
/// of the parent has been consumed.
#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    stream_id: u64,
    gen: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngState {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut gen = ChaCha8Rng::seed_from_u64(seed);
        gen.set_stream(stream_id);
        RngState {
            seed,
            stream_id,
            gen,
            spare_normal: None,
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream keyed by `tag`. Distinct tags give distinct streams and no
    /// child shares a key with its parent.
    pub fn split(&self, tag: u64) -> RngState {
        let key = splitmix64(self.seed ^ splitmix64(self.stream_id.wrapping_add(0xA5A5_A5A5)));
        let child_seed = splitmix64(key ^ splitmix64(tag.wrapping_mul(0xD6E8_FEB8_6659_FD93)));
        RngState::new(child_seed, tag)
    }

    /// Convenience for two-level keys such as (epoch, batch).
    pub fn split2(&self, a: u64, b: u64) -> RngState {
        self.split(a).split(b)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.gen.next_u64()
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.gen.random::<f64>()
    }

    /// Uniform on [lo, hi).
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in [0, n). `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.gen.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform on {-1, +1}.
    pub fn rademacher(&mut self) -> f64 {
        if self.gen.next_u32() & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// Standard normal draw via Box-Muller; the second variate of each pair
    /// is cached for the next call.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let (a, b) = self.box_muller();
        self.spare_normal = Some(b);
        a
    }

    fn box_muller(&mut self) -> (f64, f64) {
        // 1 - U lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = TWO_PI * u2;
        (r * libm::cos(theta), r * libm::sin(theta))
    }

    /// Symmetric Beta(a, a) draw. `a` must be positive.
    pub fn beta_symmetric(&mut self, a: f64) -> Result<f64> {
        let dist = Beta::new(a, a).map_err(|_| OatError::invalid("beta concentration must be positive"))?;
        Ok(dist.sample(&mut self.gen))
    }

    /// Uniformly random permutation of 0..n (Fisher-Yates).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.index(i + 1);
            perm.swap(i, j);
        }
        perm
    }
}

/// `n` i.i.d. draws from N(mean, std^2).
pub fn gaussian(rng: &mut RngState, mean: f64, std: f64, n: usize) -> Result<Vec<f64>> {
    if !(std >= 0.0) {
        return Err(OatError::invalid("gaussian: std must be non-negative"));
    }
    if std == 0.0 {
        return Ok(vec![mean; n]);
    }
    Ok((0..n).map(|_| mean + std * rng.normal()).collect())
}

/// sign with sign(0) = 0.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Logistic function; never overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// log-sum-exp of a non-empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| libm::exp(x - m)).sum();
    m + libm::log(s)
}

/// Writes log softmax(logits) into `out`.
pub fn log_softmax_into(logits: &[f64], out: &mut [f64]) {
    let lse = log_sum_exp(logits);
    for (o, &x) in out.iter_mut().zip(logits) {
        *o = x - lse;
    }
}

/// Writes softmax(logits) into `out`; shift invariant and overflow free.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &x) in out.iter_mut().zip(logits) {
        *o = libm::exp(x - m);
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

pub fn softmax_stable(logits: &[f64]) -> ProbVector {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    ProbVector(out)
}

/// -sum_i target_i * log softmax(logits)_i.
pub fn cross_entropy_soft(logits: &[f64], target: &ProbVector) -> Result<f64> {
    if logits.len() != target.len() {
        return Err(OatError::ShapeMismatch {
            expected: target.len(),
            got: logits.len(),
        });
    }
    if logits.len() < 2 {
        return Err(OatError::invalid("cross entropy needs at least two classes"));
    }
    let lse = log_sum_exp(logits);
    Ok(target
        .as_slice()
        .iter()
        .zip(logits)
        .filter(|(&t, _)| t != 0.0)
        .map(|(&t, &x)| -t * (x - lse))
        .sum())
}

/// A probability vector: entries in [0, 1] summing to one within 1e-9.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(OatError::invalid("probability vector is empty"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(OatError::invalid("probability entry outside [0, 1]"));
        }
        let s: f64 = values.iter().sum();
        if (s - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(OatError::invalid("probabilities do not sum to one"));
        }
        Ok(ProbVector(values))
    }

    /// [1/c, ..., 1/c].
    pub fn uniform(c: usize) -> Self {
        ProbVector(vec![1.0 / c as f64; c])
    }

    pub fn one_hot(c: usize, k: usize) -> Self {
        let mut v = vec![0.0; c];
        v[k] = 1.0;
        ProbVector(v)
    }

    /// Convex combination `lam * a + (1 - lam) * b`.
    pub fn mix(a: &ProbVector, b: &ProbVector, lam: f64) -> Result<Self> {
        if a.len() != b.len() {
            return Err(OatError::ShapeMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        if !(0.0..=1.0).contains(&lam) {
            return Err(OatError::invalid("mixing coefficient outside [0, 1]"));
        }
        Ok(ProbVector(
            a.0.iter()
                .zip(&b.0)
                .map(|(x, y)| lam * x + (1.0 - lam) * y)
                .collect(),
        ))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn entropy(&self) -> f64 {
        self.0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * libm::log(p))
            .sum()
    }
}

/// Welford accumulator for a sample mean and its standard error.
#[derive(Clone, Debug, Default)]
pub struct RunningMoments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (0 for fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            libm::sqrt(self.variance() / self.n as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_std_gaussian_is_constant() {
        let mut rng = RngState::from_seed(1);
        assert_eq!(gaussian(&mut rng, 0.0, 0.0, 3).unwrap(), vec![0.0; 3]);
        assert_eq!(gaussian(&mut rng, 5.0, 0.0, 1).unwrap(), vec![5.0]);
        assert!(gaussian(&mut rng, 0.0, -1.0, 1).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let n = 1_000_000;
        let mut rng = RngState::new(7, 3);
        let xs = gaussian(&mut rng, 0.0, 1.0, n).unwrap();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut r = RngState::new(42, 9);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = RngState::new(42, 9);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        let mut parent = RngState::new(42, 9);
        let child_before = parent.split(1).next_u64();
        parent.next_u64();
        assert_eq!(parent.split(1).next_u64(), child_before);
        assert_ne!(parent.split(2).next_u64(), child_before);
        assert_ne!(parent.split(1).seed(), parent.seed());
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(1.5) - 0.817_574_476_193_643_7).abs() < 1e-12);
        for &x in &[1e-3, 0.7, 3.0, 40.0, 1000.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-12);
        }
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
    }

    #[test]
    fn cross_entropy_cases() {
        let half = ProbVector::uniform(2);
        let ce = cross_entropy_soft(&[0.0, 0.0], &half).unwrap();
        assert!((ce - core::f64::consts::LN_2).abs() < 1e-15);

        for c in [2usize, 3, 10] {
            let logits = vec![3.7; c];
            let ce = cross_entropy_soft(&logits, &ProbVector::uniform(c)).unwrap();
            assert!((ce - libm::log(c as f64)).abs() < 1e-12);
        }

        let ce = cross_entropy_soft(&[2.0, 0.0], &ProbVector::one_hot(2, 0)).unwrap();
        assert!((ce - 0.126_928_011_042_972_6).abs() < 1e-12);

        assert!(cross_entropy_soft(&[0.0, 0.0, 0.0], &half).is_err());
    }

    #[test]
    fn softmax_cases() {
        let p = softmax_stable(&[0.0, 0.0, 0.0]);
        for &v in p.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax_stable(&[1000.0, 0.0]);
        assert!((p.as_slice()[0] - 1.0).abs() < 1e-15);
        assert!(p.as_slice()[1] >= 0.0 && p.as_slice()[1] < 1e-300);
        let a = softmax_stable(&[0.3, -1.2, 2.0]);
        let b = softmax_stable(&[100.3, 98.8, 102.0]);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_of_zero_is_zero() {
        assert_eq!(sign(0.0), 0.0);
        assert_eq!(sign(-0.0), 0.0);
        assert_eq!(sign(2.0), 1.0);
        assert_eq!(sign(-1e-300), -1.0);
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![0.25; 4]).is_ok());
        let m = ProbVector::mix(&ProbVector::one_hot(3, 0), &ProbVector::uniform(3), 0.4).unwrap();
        assert!((m.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn softmax_is_a_probability_vector(xs in proptest::collection::vec(-500.0f64..500.0, 2..12)) {
            let p = softmax_stable(&xs);
            proptest::prop_assert!(ProbVector::new(p.clone().into_vec()).is_ok());
        }

        #[test]
        fn cross_entropy_bounded_below_by_entropy(
            xs in proptest::collection::vec(-20.0f64..20.0, 3),
            ws in proptest::collection::vec(0.01f64..1.0, 3),
        ) {
            let s: f64 = ws.iter().sum();
            let t = ProbVector::new(ws.iter().map(|w| w / s).collect()).unwrap();
            let ce = cross_entropy_soft(&xs, &t).unwrap();
            proptest::prop_assert!(ce >= t.entropy() - 1e-12);
            let at_target: Vec<f64> = t.as_slice().iter().map(|p| libm::log(*p)).collect();
            let ce_min = cross_entropy_soft(&at_target, &t).unwrap();
            proptest::prop_assert!((ce_min - t.entropy()).abs() < 1e-12);
        }
    }
}
