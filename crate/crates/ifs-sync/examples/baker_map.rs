//! The generalized Baker map and the itinerary encodings.
//!
//! Encodes random words into the unit interval, checks the semi-conjugacy
//! `B_+ o h_+ = h_+ o sigma` on truncations, and pushes a uniform cloud
//! through the Baker map to watch Lebesgue measure stay put.

use ifs_sync::driving::{
    baker_forward, baker_forward_y, encode_full, encode_plus, sample_word, BakerState,
    ProbabilityVector,
};
use ifs_sync::rng::SplitMix64;

fn main() {
    let p = ProbabilityVector::new(vec![0.7, 0.3]).unwrap();
    let mut rng = SplitMix64::new(2024);

    // one concrete word and its encoding
    let w = sample_word(&p, 12, &mut rng);
    let (y, tail) = encode_plus(&w, &p).unwrap();
    println!("word       {}", w.digits());
    println!("h+(word)   {y:.12}  (truncation tail {tail:.3e})");
    let state = encode_full(&w, &w, &p).unwrap();
    println!("h(word|word) = (y, z) = ({:.12}, {:.12})", state.y, state.z);

    // semi-conjugacy residual over many random words
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let w = sample_word(&p, 40, &mut rng);
        let (y, _) = encode_plus(&w, &p).unwrap();
        let (y_shift, _) = encode_plus(&w.shifted(), &p).unwrap();
        worst = worst.max((baker_forward_y(y, &p) - y_shift).abs());
    }
    println!("\nsemi-conjugacy residual over 1000 length-40 words: {worst:.3e}");

    // Lebesgue invariance: push 100k uniform points 10 steps forward and
    // histogram the result on a 16x16 grid
    let n = 100_000;
    let mut counts = vec![0u64; 256];
    for _ in 0..n {
        let mut s = BakerState::new(rng.next_f64(), rng.next_f64()).unwrap();
        for _ in 0..10 {
            s = baker_forward(s, &p);
        }
        let cy = ((s.y * 16.0) as usize).min(15);
        let cz = ((s.z * 16.0) as usize).min(15);
        counts[cy * 16 + cz] += 1;
    }
    let mean = n as f64 / 256.0;
    let sigma = (n as f64 * (1.0 / 256.0) * (255.0 / 256.0)).sqrt();
    let worst_dev = counts
        .iter()
        .map(|&c| (c as f64 - mean).abs() / sigma)
        .fold(0.0f64, f64::max);
    println!("Lebesgue invariance: worst cell deviation {worst_dev:.2} sigma on a 16x16 grid");
}
