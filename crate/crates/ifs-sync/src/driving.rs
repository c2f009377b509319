//! The base dynamics: Bernoulli words over `k` symbols, the generalized
//! Baker map on the unit square, and the itinerary encodings that
//! semi-conjugate the shift to the Baker map.
//!
//! The Baker map expands the vertical strip `I_i = [l_i, l_i + p_i)` by
//! `1/p_i` horizontally while contracting by `p_i` vertically:
//!
//! ```text
//! B(y, z) = ((y - l_i) / p_i,  p_i z + l_i)    for y in I_i.
//! ```
//!
//! Strips are left-closed/right-open. Words are stored most-recent-last for
//! futures and most-recent-first for pasts, matching the composition order
//! of the fiber maps.

use crate::rng::SplitMix64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DrivingError {
    #[error("probability vector invalid: {0}")]
    BadProbabilities(String),
    #[error("symbol {symbol} out of range for {k} symbols")]
    SymbolOutOfRange { symbol: usize, k: usize },
    #[error("word must be nonempty")]
    EmptyWord,
    #[error("Baker coordinate {0} outside [0, 1)")]
    BadCoordinate(f64),
}

/// Probabilities `p_0, ..., p_{k-1}` with the derived strip data
/// `l_i = sum_{j<i} p_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    p: Vec<f64>,
    lows: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(p: Vec<f64>) -> Result<Self, DrivingError> {
        if p.is_empty() {
            return Err(DrivingError::BadProbabilities("empty vector".into()));
        }
        if let Some(bad) = p.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return Err(DrivingError::BadProbabilities(format!(
                "entry {bad} not strictly positive"
            )));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(DrivingError::BadProbabilities(format!(
                "probabilities sum to {sum}"
            )));
        }
        let mut lows = Vec::with_capacity(p.len());
        let mut acc = 0.0;
        for &x in &p {
            lows.push(acc);
            acc += x;
        }
        Ok(ProbabilityVector { p, lows })
    }

    pub fn uniform(k: usize) -> Self {
        ProbabilityVector::new(vec![1.0 / k as f64; k]).expect("uniform vector is valid")
    }

    pub fn k(&self) -> usize {
        self.p.len()
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.p[i]
    }

    /// Left endpoint `l_i` of strip `I_i`.
    pub fn strip_low(&self, i: usize) -> f64 {
        self.lows[i]
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }
}

/// The unique `i` with `y` in `I_i = [l_i, l_i + p_i)`.
pub fn strip_index(y: f64, p: &ProbabilityVector) -> usize {
    let mut i = p.lows.partition_point(|&l| l <= y);
    if i == 0 {
        return 0;
    }
    i -= 1;
    i.min(p.k() - 1)
}

/// Finite driving word over `{0, ..., k-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolWord {
    symbols: Vec<usize>,
}

impl SymbolWord {
    pub fn new(symbols: Vec<usize>, k: usize) -> Result<Self, DrivingError> {
        if let Some(&bad) = symbols.iter().find(|&&s| s >= k) {
            return Err(DrivingError::SymbolOutOfRange { symbol: bad, k });
        }
        Ok(SymbolWord { symbols })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    /// The shifted word (first symbol dropped).
    pub fn shifted(&self) -> SymbolWord {
        SymbolWord {
            symbols: self.symbols[1.min(self.symbols.len())..].to_vec(),
        }
    }

    /// Word with `s` prepended (for growing pasts, most-recent-first).
    pub fn prepended(&self, s: usize) -> SymbolWord {
        let mut symbols = Vec::with_capacity(self.symbols.len() + 1);
        symbols.push(s);
        symbols.extend_from_slice(&self.symbols);
        SymbolWord { symbols }
    }

    /// Digit-string rendering used in CSV/JSON dumps.
    pub fn digits(&self) -> String {
        self.symbols.iter().map(|s| s.to_string()).collect()
    }
}

/// I.i.d. word of length `n`, symbol `i` with probability `p_i` (drawn by
/// CDF inversion, so the strips define the sampler too).
pub fn sample_word(p: &ProbabilityVector, n: usize, rng: &mut SplitMix64) -> SymbolWord {
    SymbolWord {
        symbols: (0..n).map(|_| strip_index(rng.next_f64(), p)).collect(),
    }
}

/// Point of the unit square `[0, 1)^2`; `y` drives the future, `z` records
/// the past.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BakerState {
    pub y: f64,
    pub z: f64,
}

impl BakerState {
    pub fn new(y: f64, z: f64) -> Result<Self, DrivingError> {
        for v in [y, z] {
            if !(0.0..1.0).contains(&v) {
                return Err(DrivingError::BadCoordinate(v));
            }
        }
        Ok(BakerState { y, z })
    }
}

fn clamp_unit(v: f64) -> f64 {
    if v >= 1.0 {
        f64::from_bits(1.0f64.to_bits() - 1)
    } else if v < 0.0 {
        0.0
    } else {
        v
    }
}

/// Expanding factor of the Baker map: `B_+(y) = (y - l_i) / p_i` on `I_i`.
pub fn baker_forward_y(y: f64, p: &ProbabilityVector) -> f64 {
    let i = strip_index(y, p);
    clamp_unit((y - p.strip_low(i)) / p.prob(i))
}

/// One forward step of the generalized Baker map.
pub fn baker_forward(s: BakerState, p: &ProbabilityVector) -> BakerState {
    let i = strip_index(s.y, p);
    BakerState {
        y: clamp_unit((s.y - p.strip_low(i)) / p.prob(i)),
        z: clamp_unit(p.prob(i) * s.z + p.strip_low(i)),
    }
}

/// One backward step; the inverse branch is selected by the strip of `z`.
pub fn baker_backward(s: BakerState, p: &ProbabilityVector) -> BakerState {
    let i = strip_index(s.z, p);
    BakerState {
        y: clamp_unit(p.prob(i) * s.y + p.strip_low(i)),
        z: clamp_unit((s.z - p.strip_low(i)) / p.prob(i)),
    }
}

/// Itinerary encoding `h_+` truncated at the word length:
/// `y = sum_i l_{w(i)} prod_{j<i} p_{w(j)}`. Returns `(y, tail)` where the
/// tail `prod_j p_{w(j)}` bounds the truncation error of the infinite series.
pub fn encode_plus(w: &SymbolWord, p: &ProbabilityVector) -> Result<(f64, f64), DrivingError> {
    if w.is_empty() {
        return Err(DrivingError::EmptyWord);
    }
    let mut y = 0.0;
    let mut prefix = 1.0;
    for &s in w.symbols() {
        if s >= p.k() {
            return Err(DrivingError::SymbolOutOfRange { symbol: s, k: p.k() });
        }
        y += p.strip_low(s) * prefix;
        prefix *= p.prob(s);
    }
    Ok((clamp_unit(y), prefix))
}

/// Two-sided encoding `h`: `y` from the future, `z` from the past, where
/// `past.symbols()[i-1]` holds `omega(-i)`.
pub fn encode_full(
    past: &SymbolWord,
    future: &SymbolWord,
    p: &ProbabilityVector,
) -> Result<BakerState, DrivingError> {
    if past.is_empty() {
        return Err(DrivingError::EmptyWord);
    }
    let (y, _) = encode_plus(future, p)?;
    let mut z = 0.0;
    let mut prefix = 1.0;
    for &s in past.symbols() {
        if s >= p.k() {
            return Err(DrivingError::SymbolOutOfRange { symbol: s, k: p.k() });
        }
        z += p.strip_low(s) * prefix;
        prefix *= p.prob(s);
    }
    Ok(BakerState {
        y,
        z: clamp_unit(z),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(p: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(p.to_vec()).unwrap()
    }

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(vec![]).is_err());
        assert!(ProbabilityVector::new(vec![0.5, 0.4]).is_err());
        assert!(ProbabilityVector::new(vec![1.1, -0.1]).is_err());
        let err = ProbabilityVector::new(vec![0.5, 0.6]).unwrap_err();
        assert!(err.to_string().contains("probabilities sum to 1.1"));
        assert!(ProbabilityVector::new(vec![0.7, 0.3]).is_ok());
    }

    #[test]
    fn strip_index_conventions() {
        let p = pv(&[0.5, 0.5]);
        assert_eq!(strip_index(0.25, &p), 0);
        assert_eq!(strip_index(0.75, &p), 1);
        // coincides with floor(k y) for uniform probabilities
        for i in 0..100 {
            let y = i as f64 / 100.0;
            assert_eq!(strip_index(y, &p), (2.0 * y) as usize);
        }
        let p = pv(&[0.2, 0.8]);
        assert_eq!(strip_index(0.1, &p), 0);
        assert_eq!(strip_index(0.5, &p), 1);
        // left-closed boundary
        assert_eq!(strip_index(0.2, &p), 1);
        assert_eq!(strip_index(0.0, &p), 0);
    }

    #[test]
    fn sample_word_basics() {
        let mut rng = SplitMix64::new(9);
        let p = pv(&[1.0]);
        let w = sample_word(&p, 5, &mut rng);
        assert_eq!(w.symbols(), &[0, 0, 0, 0, 0]);
        assert_eq!(sample_word(&p, 17, &mut rng).len(), 17);
    }

    #[test]
    fn sample_word_frequencies() {
        // frequency of symbol 0 within 3 sigma of p0 at n = 1e5
        let mut rng = SplitMix64::new(11);
        let p = pv(&[0.7, 0.3]);
        let n = 100_000;
        let w = sample_word(&p, n, &mut rng);
        let freq = w.symbols().iter().filter(|&&s| s == 0).count() as f64 / n as f64;
        let band = 3.0 * (0.21f64 / n as f64).sqrt();
        assert!((freq - 0.7).abs() <= band, "freq = {freq}");
    }

    #[test]
    fn baker_forward_examples() {
        let p = pv(&[0.5, 0.5]);
        let s = baker_forward(BakerState::new(0.25, 0.5).unwrap(), &p);
        assert!((s.y - 0.5).abs() < 1e-15);
        assert!((s.z - 0.25).abs() < 1e-15);

        let p = pv(&[0.2, 0.8]);
        let s = baker_forward(BakerState::new(0.5, 0.0).unwrap(), &p);
        assert!((s.y - 0.375).abs() < 1e-15);
        assert!((s.z - 0.2).abs() < 1e-15);
    }

    #[test]
    fn baker_backward_inverts_forward() {
        let mut rng = SplitMix64::new(5);
        let p = pv(&[0.2, 0.3, 0.5]);
        for _ in 0..1000 {
            let s = BakerState::new(rng.next_f64(), rng.next_f64()).unwrap();
            let fwd = baker_forward(s, &p);
            let back = baker_backward(fwd, &p);
            assert!((back.y - s.y).abs() <= 1e-12);
            assert!((back.z - s.z).abs() <= 1e-12);
            let fwd2 = baker_forward(baker_backward(s, &p), &p);
            assert!((fwd2.y - s.y).abs() <= 1e-12);
            assert!((fwd2.z - s.z).abs() <= 1e-12);
        }
    }

    #[test]
    fn baker_preserves_lebesgue_histogram() {
        // 1e5 uniform points, 10 backward steps, 16x16 cells within 4 sigma
        let mut rng = SplitMix64::new(23);
        let p = pv(&[0.7, 0.3]);
        let n = 100_000;
        let mut counts = vec![0u64; 256];
        for _ in 0..n {
            let mut s = BakerState::new(rng.next_f64(), rng.next_f64()).unwrap();
            for _ in 0..10 {
                s = baker_backward(s, &p);
            }
            let cy = ((s.y * 16.0) as usize).min(15);
            let cz = ((s.z * 16.0) as usize).min(15);
            counts[cy * 16 + cz] += 1;
        }
        let cell_p = 1.0 / 256.0;
        let mean = n as f64 * cell_p;
        let sigma = (n as f64 * cell_p * (1.0 - cell_p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - mean).abs() <= 4.0 * sigma,
                "cell {i}: count {c}, expected {mean} +- {sigma}"
            );
        }
    }

    #[test]
    fn encode_plus_examples() {
        let p = pv(&[0.5, 0.5]);
        let w = SymbolWord::new(vec![0; 10], 2).unwrap();
        assert_eq!(encode_plus(&w, &p).unwrap().0, 0.0);

        let w = SymbolWord::new(vec![1, 0, 0, 0], 2).unwrap();
        assert!((encode_plus(&w, &p).unwrap().0 - 0.5).abs() < 1e-15);

        let p = pv(&[0.2, 0.8]);
        let w = SymbolWord::new(vec![1, 1, 0, 0, 0], 2).unwrap();
        assert!((encode_plus(&w, &p).unwrap().0 - 0.36).abs() < 1e-15);
    }

    #[test]
    fn encode_full_examples() {
        let p = pv(&[0.5, 0.5]);
        let future = SymbolWord::new(vec![0, 0, 0], 2).unwrap();
        let past = SymbolWord::new(vec![0, 0, 0], 2).unwrap();
        assert_eq!(encode_full(&past, &future, &p).unwrap().z, 0.0);
        let past = SymbolWord::new(vec![1], 2).unwrap();
        assert!((encode_full(&past, &future, &p).unwrap().z - 0.5).abs() < 1e-15);
    }

    #[test]
    fn itinerary_consistency_short_words() {
        // strip_index(h_+(w)) = w(0), enumerated for all words of length <= 10
        for p in [pv(&[0.5, 0.5]), pv(&[0.2, 0.8])] {
            for len in 1..=10usize {
                for bits in 0..(1u32 << len) {
                    let symbols: Vec<usize> =
                        (0..len).map(|i| ((bits >> i) & 1) as usize).collect();
                    let w = SymbolWord::new(symbols, 2).unwrap();
                    let (y, _) = encode_plus(&w, &p).unwrap();
                    assert_eq!(strip_index(y, &p), w.symbols()[0]);
                }
            }
        }
    }

    #[test]
    fn cylinders_map_to_intervals() {
        // lexicographic enumeration of words of length n is monotone in y and
        // the cylinder of w has width prod_j p_{w(j)}
        let p = pv(&[0.2, 0.8]);
        let len = 10usize;
        let mut previous = -1.0;
        for bits in 0..(1u32 << len) {
            // most-significant symbol first = lexicographic order
            let symbols: Vec<usize> = (0..len)
                .map(|i| ((bits >> (len - 1 - i)) & 1) as usize)
                .collect();
            let w = SymbolWord::new(symbols, 2).unwrap();
            let (y, tail) = encode_plus(&w, &p).unwrap();
            assert!(y > previous, "lexicographic order broke at {bits:b}");
            let expected: f64 = w.symbols().iter().map(|&s| p.prob(s)).product();
            assert!((tail - expected).abs() <= 1e-15 * expected.max(1e-300));
            previous = y;
        }
    }

    #[test]
    fn semiconjugacy_on_random_words() {
        // |B_+(h_+(w)) - h_+(shifted w)| small after truncation; with
        // length-40 words the tail is below 1e-6 and the residual must be
        // below 1e-9
        let mut rng = SplitMix64::new(77);
        let p = pv(&[0.7, 0.3]);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let w = sample_word(&p, 40, &mut rng);
            let (y, _) = encode_plus(&w, &p).unwrap();
            let (y_shift, _) = encode_plus(&w.shifted(), &p).unwrap();
            worst = worst.max((baker_forward_y(y, &p) - y_shift).abs());
        }
        assert!(worst <= 1e-9, "max residual {worst}");
    }

    #[test]
    fn two_sided_semiconjugacy_on_random_words() {
        // baker_forward(h(past, future)) = h(past <- future(0), shifted future)
        let mut rng = SplitMix64::new(78);
        let p = pv(&[0.7, 0.3]);
        for _ in 0..1000 {
            let past = sample_word(&p, 40, &mut rng);
            let future = sample_word(&p, 40, &mut rng);
            let s = encode_full(&past, &future, &p).unwrap();
            let fwd = baker_forward(s, &p);
            let shifted = encode_full(
                &past.prepended(future.symbols()[0]),
                &future.shifted(),
                &p,
            )
            .unwrap();
            assert!((fwd.y - shifted.y).abs() <= 1e-9);
            assert!((fwd.z - shifted.z).abs() <= 1e-9);
        }
    }

    proptest! {
        #[test]
        fn prop_semiconjugacy(symbols in proptest::collection::vec(0usize..3, 1..40)) {
            let p = pv(&[0.2, 0.3, 0.5]);
            let w = SymbolWord::new(symbols, 3).unwrap();
            let (y, tail) = encode_plus(&w, &p).unwrap();
            if w.len() > 1 {
                let (y_shift, _) = encode_plus(&w.shifted(), &p).unwrap();
                let residual = (baker_forward_y(y, &p) - y_shift).abs();
                // truncation error is amplified by at most 1/min(p)
                prop_assert!(residual <= tail / 0.2 + 1e-12);
            }
        }

        #[test]
        fn prop_baker_round_trip(y in 0.0..1.0f64, z in 0.0..1.0f64) {
            let p = pv(&[0.7, 0.3]);
            let s = BakerState::new(y, z).unwrap();
            let back = baker_backward(baker_forward(s, &p), &p);
            prop_assert!((back.y - s.y).abs() <= 1e-12);
            prop_assert!((back.z - s.z).abs() <= 1e-12);
        }
    }
}
